//! Language profiles and artifact preparation.

use std::collections::BTreeMap;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use judgekit_sandbox::{
    ExecutionLimits, ExecutionOutcome, IsolationPolicy, SandboxError, SyscallWhitelist, TerminationKind, Workdir, MIB,
};
use serde::Deserialize;

use crate::engine::Engine;
use crate::error::ToolchainError;

const BUILTIN_PROFILES: &[(&str, &str)] = &[
    ("c", include_str!("../profiles/c.toml")),
    ("cpp", include_str!("../profiles/cpp.toml")),
    ("python3", include_str!("../profiles/python3.toml")),
    ("python2", include_str!("../profiles/python2.toml")),
];

/// How to build and run programs of one language.
#[derive(Debug, Clone)]
pub struct GuestLanguageProfile {
    pub name: String,
    /// Reporting group, e.g. `C/C++`.
    pub group: String,
    pub aliases: Vec<String>,
    pub source_file: String,
    pub binary_file: Option<String>,
    pub compile_template: Option<Vec<String>>,
    pub run_template: Vec<String>,
    pub policy: IsolationPolicy,
    pub compile_limits: ExecutionLimits,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileFile {
    name: String,
    group: Option<String>,
    #[serde(default)]
    aliases: Vec<String>,
    source_file: String,
    binary_file: Option<String>,
    compile: Option<Vec<String>>,
    run: Vec<String>,
    /// Builtin whitelist name, or a path relative to the profile file.
    whitelist: String,
    compile_limits: Option<LimitOverrides>,
}

/// Limit fields a profile may override; the rest keep the compile defaults.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct LimitOverrides {
    cpu_time_ms: Option<u64>,
    wall_time_ms: Option<u64>,
    memory_bytes: Option<u64>,
    file_size_bytes: Option<u64>,
    stack_bytes: Option<u64>,
    output_cap_bytes: Option<u64>,
}

impl LimitOverrides {
    fn apply(self, mut l: ExecutionLimits) -> ExecutionLimits {
        l.cpu_time_ms = self.cpu_time_ms.unwrap_or(l.cpu_time_ms);
        l.wall_time_ms = self.wall_time_ms.unwrap_or(l.wall_time_ms.max(2 * l.cpu_time_ms));
        l.memory_bytes = self.memory_bytes.unwrap_or(l.memory_bytes);
        l.file_size_bytes = self.file_size_bytes.unwrap_or(l.file_size_bytes);
        l.stack_bytes = self.stack_bytes.unwrap_or(l.stack_bytes);
        l.output_cap_bytes = self.output_cap_bytes.unwrap_or(l.output_cap_bytes);
        l
    }
}

/// 30 s cpu and 2 GiB for the compiler.
pub fn default_compile_limits() -> ExecutionLimits {
    ExecutionLimits {
        cpu_time_ms: 30_000,
        wall_time_ms: 60_000,
        memory_bytes: 2048 * MIB,
        ..ExecutionLimits::default()
    }
}

impl GuestLanguageProfile {
    pub fn parse(text: &str, base_dir: Option<&Path>) -> Result<Self, ToolchainError> {
        let f: ProfileFile = toml::from_str(text).map_err(|e| ToolchainError::Profile(e.to_string()))?;
        let whitelist = match SyscallWhitelist::builtin(&f.whitelist) {
            Some(w) => w,
            None => {
                let path = base_dir.map(|d| d.join(&f.whitelist)).unwrap_or_else(|| PathBuf::from(&f.whitelist));
                SyscallWhitelist::load(&path)?
            }
        };
        let profile = Self {
            group: f.group.unwrap_or_else(|| f.name.clone()),
            name: f.name,
            aliases: f.aliases,
            source_file: f.source_file,
            binary_file: f.binary_file,
            compile_template: f.compile,
            run_template: f.run,
            policy: IsolationPolicy::new(whitelist),
            compile_limits: f.compile_limits.unwrap_or_default().apply(default_compile_limits()),
        };
        profile.validate()?;
        Ok(profile)
    }

    fn validate(&self) -> Result<(), ToolchainError> {
        let bad = |why: &str| Err(ToolchainError::Profile(format!("{}: {why}", self.name)));
        if self.run_template.is_empty() {
            return bad("run template is empty");
        }
        if self.compile_template.as_ref().is_some_and(|t| t.is_empty()) {
            return bad("compile template is empty");
        }
        if self.compile_template.is_some() != self.binary_file.is_some() {
            return bad("compiled profiles need both `compile` and `binary_file`");
        }
        for name in std::iter::once(&self.source_file).chain(&self.binary_file) {
            if name.is_empty() || name.contains('/') || name.starts_with('.') || name.ends_with(".txt") {
                return bad("file names must be plain, non-hidden and not collide with capture files");
            }
        }
        Ok(())
    }

    pub fn is_interpreted(&self) -> bool {
        self.compile_template.is_none()
    }

    /// Whether the first program of the run template exists on this host.
    pub fn available(&self) -> bool {
        let program = &self.run_template[0];
        if program.contains('{') {
            // compiled: the compiler must exist instead
            return self.compile_template.as_ref().is_some_and(|t| Path::new(&t[0]).exists());
        }
        Path::new(program).exists()
    }
}

/// Substitutes `{src}` and `{bin}` in a template.
pub fn render_template(template: &[String], src: &Path, bin: Option<&Path>) -> Vec<String> {
    let src = src.to_string_lossy();
    let bin = bin.map(|b| b.to_string_lossy().into_owned()).unwrap_or_default();
    template.iter().map(|arg| arg.replace("{src}", &src).replace("{bin}", &bin)).collect()
}

/// Registered profiles, read-only after construction.
#[derive(Debug, Clone)]
pub struct ProfileRegistry {
    profiles: BTreeMap<String, Arc<GuestLanguageProfile>>,
    aliases: BTreeMap<String, String>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self { profiles: BTreeMap::new(), aliases: BTreeMap::new() }
    }

    /// The profiles shipped with the crate.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        for (_, text) in BUILTIN_PROFILES {
            reg.insert(GuestLanguageProfile::parse(text, None).expect("builtin profile is valid"));
        }
        reg
    }

    /// Builtins overlaid with every `*.toml` in `dir`.
    pub fn with_dir(dir: &Path) -> Result<Self, ToolchainError> {
        let mut reg = Self::builtin();
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        paths.sort();
        for p in paths {
            let text = fs::read_to_string(&p)?;
            let profile = GuestLanguageProfile::parse(&text, p.parent())
                .map_err(|e| ToolchainError::Profile(format!("{}: {e}", p.display())))?;
            reg.insert(profile);
        }
        Ok(reg)
    }

    pub fn insert(&mut self, profile: GuestLanguageProfile) {
        for a in &profile.aliases {
            self.aliases.insert(a.clone(), profile.name.clone());
        }
        self.profiles.insert(profile.name.clone(), Arc::new(profile));
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<GuestLanguageProfile>, ToolchainError> {
        let key = self.aliases.get(name).map(String::as_str).unwrap_or(name);
        self.profiles.get(key).cloned().ok_or_else(|| ToolchainError::UnknownLanguage(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.keys().map(String::as_str)
    }
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Debug, Clone)]
pub enum ArtifactEntry {
    /// Executable produced by the compiler, root-owned and read-only.
    Binary(PathBuf),
    /// Interpreted source, installed next to each run.
    Source(Arc<str>),
}

/// A submission ready to run; cheap to clone and share across runs.
#[derive(Debug, Clone)]
pub struct CompiledArtifact {
    pub profile: Arc<GuestLanguageProfile>,
    pub entry: ArtifactEntry,
    pub compile_log: String,
    _build_dir: Option<Arc<Workdir>>,
}

impl CompiledArtifact {
    pub fn profile_name(&self) -> &str {
        &self.profile.name
    }

    /// Places the artifact in a run workdir and returns the command line.
    pub(crate) fn install(&self, workdir: &Path) -> std::io::Result<Vec<String>> {
        let src = workdir.join(&self.profile.source_file);
        match &self.entry {
            ArtifactEntry::Source(text) => {
                write_readonly(&src, text.as_bytes())?;
                Ok(render_template(&self.profile.run_template, &src, None))
            }
            ArtifactEntry::Binary(path) => {
                let bin = workdir.join(self.profile.binary_file.as_deref().unwrap_or("main"));
                if fs::hard_link(path, &bin).is_err() {
                    fs::copy(path, &bin)?;
                    fs::set_permissions(&bin, fs::Permissions::from_mode(0o555))?;
                }
                Ok(render_template(&self.profile.run_template, &src, Some(&bin)))
            }
        }
    }
}

/// Outcome of [`compile`].
#[derive(Debug, Clone)]
pub enum CompileResult {
    Ok(CompiledArtifact),
    /// The full compiler log.
    Failure(String),
}

impl CompileResult {
    pub fn artifact(self) -> Option<CompiledArtifact> {
        match self {
            CompileResult::Ok(a) => Some(a),
            CompileResult::Failure(_) => None,
        }
    }
}

pub(crate) fn write_readonly(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    fs::write(path, bytes)?;
    fs::set_permissions(path, fs::Permissions::from_mode(0o444))
}

/// Builds `source` with `profile`. The compiler itself runs in the sandbox
/// under the compile policy and the profile's compile limits.
pub fn compile(engine: &Engine, source: &str, profile: &Arc<GuestLanguageProfile>) -> Result<CompileResult, ToolchainError> {
    let Some(template) = &profile.compile_template else {
        return Ok(CompileResult::Ok(CompiledArtifact {
            profile: Arc::clone(profile),
            entry: ArtifactEntry::Source(Arc::from(source)),
            compile_log: String::new(),
            _build_dir: None,
        }));
    };
    let policy = engine.compile_policy();
    let dir = engine.workdir(&policy, "build-")?;
    let src = dir.path().join(&profile.source_file);
    let bin = dir.path().join(profile.binary_file.as_deref().unwrap_or("main"));
    write_readonly(&src, source.as_bytes())?;
    let command = render_template(template, &src, Some(&bin));
    let out = engine.execute(&command, b"", &profile.compile_limits, &policy, dir.path())?;
    let log = compiler_log(&out, dir.path());
    if let TerminationKind::IsolationSetupFailure(why) = &out.termination {
        return Err(ToolchainError::Sandbox(SandboxError::Trace(format!("compile sandbox: {why}"))));
    }
    if !out.termination.is_clean_exit() {
        let mut log = log;
        if !matches!(out.termination, TerminationKind::Exited(_)) {
            log.push_str(&format!("\ncompiler terminated: {}\n", out.termination));
        }
        return Ok(CompileResult::Failure(log));
    }
    let meta = fs::symlink_metadata(&bin);
    if !meta.as_ref().is_ok_and(|m| m.file_type().is_file()) {
        return Ok(CompileResult::Failure(format!("{log}\ncompiler produced no executable\n")));
    }
    // freeze the binary: later guests may run it but never change it
    std::os::unix::fs::chown(&bin, Some(0), Some(0)).or_else(|e| if engine.is_root() { Err(e) } else { Ok(()) })?;
    fs::set_permissions(&bin, fs::Permissions::from_mode(0o555))?;
    Ok(CompileResult::Ok(CompiledArtifact {
        profile: Arc::clone(profile),
        entry: ArtifactEntry::Binary(bin),
        compile_log: log,
        _build_dir: Some(Arc::new(dir)),
    }))
}

/// Compiler output with the build directory prefix removed, so the log is
/// the same for every build of one source.
fn compiler_log(out: &ExecutionOutcome, build_dir: &Path) -> String {
    let mut log = out.stderr_lossy();
    let stdout = out.stdout_lossy();
    if !stdout.trim().is_empty() {
        log.push_str(&stdout);
    }
    log.replace(&format!("{}/", build_dir.display()), "")
}
