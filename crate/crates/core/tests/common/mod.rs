#![allow(dead_code)]

use std::sync::OnceLock;

use judgekit::sandbox::SandboxRoot;
use judgekit::{Engine, ProfileRegistry, TestCase, TestSuite};
use judgekit_sandbox::ExecutionLimits;

pub fn engine() -> &'static Engine {
    static ENGINE: OnceLock<Engine> = OnceLock::new();
    ENGINE.get_or_init(|| {
        let root = SandboxRoot::new(std::env::temp_dir().join("judgekit-core-tests")).unwrap();
        Engine::new(ProfileRegistry::builtin(), root)
    })
}

/// Full isolation needs root on x86_64 Linux; elsewhere these tests are skipped.
pub fn isolation_available() -> bool {
    let root = std::fs::read_to_string("/proc/self/status")
        .ok()
        .and_then(|s| s.lines().find(|l| l.starts_with("Uid:")).map(|l| l.split_whitespace().nth(2) == Some("0")))
        .unwrap_or(false);
    let ok = cfg!(all(target_os = "linux", target_arch = "x86_64")) && root;
    if !ok {
        eprintln!("skipping: isolation requires root on x86_64 Linux");
    }
    ok
}

pub fn suite(cases: &[(&str, &str)]) -> TestSuite {
    TestSuite::new(
        "t",
        ExecutionLimits::for_problem(1000, 256 << 20),
        cases.iter().map(|(i, o)| TestCase::public(*i, *o)).collect(),
    )
}

pub const SUM_CPP: &str = r#"#include <cstdio>
int main(){long long a,b;if(scanf("%lld %lld",&a,&b)!=2)return 1;printf("%lld\n",a+b);}
"#;

pub const SUM_PY: &str = "a, b = map(int, input().split())\nprint(a + b)\n";

pub const FIRST_ARGMAX_C: &str = r#"#include <stdio.h>
int main(void){int v[3];for(int i=0;i<3;i++)if(scanf("%d",&v[i])!=1)return 1;
int b=0;for(int i=1;i<3;i++)if(v[i]>v[b])b=i;printf("%d\n",b+1);return 0;}
"#;

pub const LAST_ARGMAX_C: &str = r#"#include <stdio.h>
int main(void){int v[3];for(int i=0;i<3;i++)if(scanf("%d",&v[i])!=1)return 1;
int b=0;for(int i=1;i<3;i++)if(v[i]>=v[b])b=i;printf("%d\n",b+1);return 0;}
"#;

pub const SUM_C: &str = r#"#include <stdio.h>
int main(void){long long a,b;if(scanf("%lld %lld",&a,&b)!=2)return 1;printf("%lld\n",a+b);return 0;}
"#;

/// a+b with two C golds that agree everywhere.
pub fn sum_problem() -> judgekit::Problem {
    serde_json::from_value(serde_json::json!({
        "id": "sum",
        "statement": "Print the sum of two integers.",
        "input_format": "One line with integers a and b.",
        "output_format": "a + b",
        "examples": [{"input": "1 2", "output": "3"}],
        "time_limit_ms": 1000,
        "gold_solutions": [
            {"language": "c", "source": SUM_C},
            {"language": "cpp", "source": SUM_CPP}
        ],
        "public_tests": [{"input": "1 2\n", "output": "3\n"}]
    }))
    .unwrap()
}

/// Position of a maximum of three numbers; the golds break ties differently.
pub fn argmax_problem() -> judgekit::Problem {
    serde_json::from_value(serde_json::json!({
        "id": "argmax",
        "statement": "Print the 1-based position of a maximum among three integers.",
        "input_format": "Three integers a b c.",
        "output_format": "One position.",
        "time_limit_ms": 1000,
        "gold_solutions": [
            {"language": "c", "source": FIRST_ARGMAX_C},
            {"language": "c", "source": LAST_ARGMAX_C}
        ],
        "public_tests": [{"input": "1 5 2\n", "output": "2\n"}]
    }))
    .unwrap()
}

/// A reply carrying a generator that prints `inputs` as a JSON list.
pub fn generator_reply(inputs: &[&str]) -> String {
    let list = serde_json::to_string(inputs).unwrap();
    format!("Here is the generator.\n```python\nimport json\nprint(json.dumps({list}))\n```\n")
}

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}
