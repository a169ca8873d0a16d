//! Prompt templates for generator and checker requests.

use crate::model::{CaseKind, Problem, Solution};

/// Generator skeleton for problems whose input is a single test.
pub const SINGLE_TEST_TEMPLATE: &str = r#"```python
import json
import random

def generate_test_inputs():
    test_case_list = []
    for _ in range(COUNT):
        n = random.randint(1, 100000)
        values = [random.randint(-10**9, 10**9) for _ in range(n)]
        # one element = one complete input file
        test_case_list.append(f"{n}\n{' '.join(map(str, values))}\n")
    return test_case_list

if __name__ == "__main__":
    print(json.dumps(generate_test_inputs()))
```"#;

/// Generator skeleton for problems whose first input line is a test count.
pub const MULTI_TEST_TEMPLATE: &str = r#"```python
import json
import random

def one_test():
    n = random.randint(1, 1000)
    values = [random.randint(1, 10**9) for _ in range(n)]
    return f"{n}\n{' '.join(map(str, values))}\n"

def generate_test_inputs():
    test_case_list = []
    for _ in range(COUNT):
        t = random.randint(1, 10)
        # the first line of every input is the number of tests it holds
        test_case_list.append(f"{t}\n" + "".join(one_test() for _ in range(t)))
    return test_case_list

if __name__ == "__main__":
    print(json.dumps(generate_test_inputs()))
```"#;

pub const REGULAR_COUNT_PHRASE: &str = "80 unit test inputs";
pub const CORNER_COUNT_PHRASE: &str = "20 strictly boundary unit test inputs";
pub const FORMAT_ERROR_HEADING: &str = "Formatting error";
pub const EXECUTION_ERROR_HEADING: &str = "Generator crashed";
pub const CHECKER_DECISION_LINE: &str = "Whether custom checker is needed: Yes/No";
pub const CHECKER_REVIEW_LINE: &str = "Does the checker have problems: Yes/No";

pub fn problem_block(problem: &Problem) -> String {
    let mut s = format!("Statement:\n{}\n", problem.statement.trim());
    if !problem.input_format.trim().is_empty() {
        s.push_str(&format!("\nInput format:\n{}\n", problem.input_format.trim()));
    }
    if !problem.output_format.trim().is_empty() {
        s.push_str(&format!("\nOutput format:\n{}\n", problem.output_format.trim()));
    }
    if !problem.examples.is_empty() {
        s.push('\n');
        s.push_str(&problem.examples_text());
    }
    s.push_str(&format!(
        "\nLimits: {} ms per test, {} MiB of memory.\n",
        problem.time_limit_ms,
        problem.memory_limit_bytes >> 20
    ));
    s
}

fn template_for(multi_test: bool, count: usize) -> String {
    let t = if multi_test { MULTI_TEST_TEMPLATE } else { SINGLE_TEST_TEMPLATE };
    t.replace("COUNT", &count.to_string())
}

fn output_rules(multi_test: bool, count: usize) -> String {
    let which = if multi_test {
        "This problem's input starts with the number of test cases, so every generated input must start with that count line. Base your program on this template:"
    } else {
        "This problem's input does not start with a number of test cases; each generated input is one test. Base your program on this template:"
    };
    format!(
        "Output contract:\n\
         - Put the generation logic in generate_test_inputs(), returning test_case_list, a list of strings.\n\
         - Each string is one whole input file exactly as the solution will read it from stdin.\n\
         - The program prints test_case_list with json.dumps as the last line of stdout and prints nothing else.\n\
         - Keep every input inside the stated constraints.\n\n\
         {which}\n{}\n",
        template_for(multi_test, count)
    )
}

/// First-round generator request for `kind`.
pub fn generator_prompt(problem: &Problem, gold: &Solution, kind: CaseKind, multi_test: bool) -> String {
    let (count, task) = match kind {
        CaseKind::Regular => (
            80,
            format!(
                "You write test data for programming contests. Write a Python 3 program that outputs {REGULAR_COUNT_PHRASE} for the problem below.\n\n\
                 Before coding, reason about:\n\
                 1. The accepted solution: which algorithm it uses and its time complexity.\n\
                 2. The shape of the input (array, intervals, tree, graph, numbers, strings, ...).\n\
                 3. Naive approaches that are correct but too slow, and what data makes them exceed the time limit.\n\
                 4. A spread of cases: small ones, typical ones, and several at the largest allowed sizes.\n\n\
                 Shapes that tend to hurt slow solutions: paths, stars and deep balanced trees; sparse, dense and acyclic graphs; \
                 strings of a single repeated letter or palindromes; powers of two and numbers with many divisors; \
                 ranges covering one point or everything.\n"
            ),
        ),
        CaseKind::Corner => (
            20,
            format!(
                "You write edge-case test data for programming contests. Write a Python 3 program that outputs {CORNER_COUNT_PHRASE} for the problem below.\n\n\
                 Every input must sit on a boundary of the constraints. Consider:\n\
                 1. Size extremes: the smallest legal input and the largest one.\n\
                 2. Value extremes: minimum and maximum values, large primes, powers of two, all-equal values.\n\
                 3. Degenerate structures: a single element, chains, stars, empty ranges, identical or all-distinct characters.\n\
                 4. Combinations of the above in one input, chosen to drive slow solutions to their worst case.\n\
                 Mark each case with a short comment naming its boundary.\n"
            ),
        ),
    };
    format!(
        "{task}\n{}\nProblem:\n{}\nAccepted solution ({}):\n```\n{}\n```\n",
        output_rules(multi_test, count),
        problem_block(problem),
        gold.language,
        gold.source.trim_end()
    )
}

/// Request to fix a generator; `execution_stage` selects the error taxonomy
/// for failures that happened while running the generator itself.
pub fn repair_prompt(problem: &Problem, generator: &str, error_heading: &str, detail: &str, execution_stage: bool) -> String {
    let taxonomy = if execution_stage {
        "Possible error kinds:\n\
         1. Formatting error: the generator output must be a list[str], one complete test input per string.\n\
         2. Generator crashed: the generator did not run to completion.\n\
         3. Something else.\n"
    } else {
        "Possible error kinds:\n\
         1. Time limit: an accepted solution ran out of time on a generated input, so the input breaks the problem's constraints.\n\
         2. Memory limit: an accepted solution ran out of memory on a generated input.\n\
         3. Inconsistent output: two accepted solutions printed different answers for the same generated input.\n\
         4. Something else.\n"
    };
    format!(
        "You maintain a pipeline that builds contest test data. A generator program prints candidate inputs; each input is run \
         through two accepted solutions, and inputs on which they agree become test cases paired with the agreed output.\n\n\
         The generator below failed. {taxonomy}\n\
         Reported error ({error_heading}):\n{detail}\n\n\
         Problem:\n{}\n\
         Current generator:\n```python\n{}\n```\n\n\
         Work out which kind of error this is and why it happened, then reply with the complete corrected generator. \
         It must still print a JSON list of strings, one whole input per element. Two reference generators:\n\n{}\n\n{}\n",
        problem_block(problem),
        generator.trim_end(),
        template_for(false, 10),
        template_for(true, 10),
    )
}

/// The checker skeleton the LLM must fill in.
pub const CHECKER_SKELETON: &str = r#"import sys

def is_valid_output(input_str, output_str, reference_output_str):
    # decide whether output_str is an acceptable answer for input_str
    ...

def main():
    if len(sys.argv) != 4:
        print(False)
        return
    input_str = sys.argv[1]
    output_str = sys.argv[2]
    reference_output_str = sys.argv[3]
    print(is_valid_output(input_str, output_str, reference_output_str))

if __name__ == "__main__":
    main()
"#;

fn checker_problem_block(problem: &Problem) -> String {
    format!(
        "Description:\n{}\n\nInput format:\n{}\n\nOutput format:\n{}\n\nExamples:\n{}",
        problem.statement.trim(),
        problem.input_format.trim(),
        problem.output_format.trim(),
        problem.examples_text()
    )
}

pub fn checker_generation_prompt(problem: &Problem) -> String {
    format!(
        "You configure the judging system of a programming contest. Decide whether the problem below needs a custom checker, \
         and write one when it does.\n\n\
         A custom checker is needed when plain text comparison with the reference answer would reject correct answers, for example:\n\
         - several different outputs are correct (constructions, any valid arrangement, any order);\n\
         - the answer is a floating-point value accepted within a tolerance;\n\
         - the output layout is flexible (spacing, line order);\n\
         - correctness can only be established by verifying the output against the input.\n\n\
         Checker requirements:\n\
         - Python 3, reading input_str, output_str and reference_output_str from sys.argv[1..3].\n\
         - All judging logic lives in is_valid_output(), which returns a bool.\n\
         - main() prints True or False and nothing else.\n\
         - Return the whole skeleton below with only is_valid_output filled in:\n\
         ```python\n{CHECKER_SKELETON}```\n\n\
         Problem:\n{}\n\n\
         Answer using exactly this layout:\n\
         {CHECKER_DECISION_LINE}\n\
         Reason: <one or two sentences>\n\
         <when the answer is Yes, the complete checker in a ```python block>\n",
        checker_problem_block(problem)
    )
}

pub fn checker_review_prompt(problem: &Problem, checker: &str) -> String {
    format!(
        "You review custom checkers for a programming contest. Inspect the checker below for mistakes.\n\n\
         Look for:\n\
         - input parsing that breaks on legal inputs or boundary cases;\n\
         - acceptance rules that differ from what the problem demands;\n\
         - crashes on malformed contestant output instead of returning False;\n\
         - printing anything other than True or False.\n\n\
         If you change it, keep reading input_str, output_str and reference_output_str from sys.argv, keep the logic in \
         is_valid_output(), and return a complete runnable script.\n\n\
         Problem:\n{}\n\n\
         Checker under review:\n```python\n{}\n```\n\n\
         Answer using exactly this layout:\n\
         {CHECKER_REVIEW_LINE}\n\
         Reason: <one or two sentences>\n\
         <when the answer is Yes, the corrected complete checker in a ```python block>\n",
        checker_problem_block(problem),
        checker.trim_end()
    )
}

/// The code in a reply: the last ```python block, else the last fenced
/// block, else the whole reply.
pub fn extract_code(reply: &str) -> String {
    let mut blocks: Vec<(bool, String)> = Vec::new();
    let mut current: Option<(bool, Vec<&str>)> = None;
    for line in reply.lines() {
        let t = line.trim_start();
        if let Some(tag) = t.strip_prefix("```") {
            match current.take() {
                Some((py, body)) => blocks.push((py, body.join("\n"))),
                None => current = Some((tag.trim().eq_ignore_ascii_case("python") || tag.trim() == "py", Vec::new())),
            }
        } else if let Some((_, body)) = current.as_mut() {
            body.push(line);
        }
    }
    // an unterminated fence still counts
    if let Some((py, body)) = current {
        blocks.push((py, body.join("\n")));
    }
    let pick = blocks.iter().rev().find(|(py, _)| *py).or_else(|| blocks.last());
    let code = match pick {
        Some((_, body)) => body.clone(),
        None => reply.to_string(),
    };
    let mut code = code.trim_matches('\n').to_string();
    code.push('\n');
    code
}
