use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use netgsa::Error;
use tempfile::NamedTempFile;

/// A failed run: exit code plus a one-line message.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "netgsa: error code={}: {}", self.code, self.message.replace('\n', " "))
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } => 3,
        Error::InsufficientDegreesOfFreedom { .. } => 4,
        Error::Parse { .. }
        | Error::InvalidConfig(_)
        | Error::InvalidConstraints(_)
        | Error::InvalidArgument(_)
        | Error::DimensionMismatch(_)
        | Error::IndexOutOfRange { .. }
        | Error::ConstantColumn { .. }
        | Error::TooFewSamples { .. }
        | Error::EmptyPathway
        | Error::EmptyGrid
        | Error::NonZeroDiagonal { .. } => 2,
        _ => 1,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::InsufficientDegreesOfFreedom { .. } => {
                format!("{e}; the mixed model needs at least three samples in total")
            }
            _ => e.to_string(),
        };
        CliError { code: exit_code(&e), message }
    }
}

/// Prefixes errors raised while reading `path` with the file name.
pub fn in_file(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        c.message = format!("{}: {}", path.display(), c.message);
        c
    }
}

pub fn read_input(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Output files collected in memory and written only once the run has
/// succeeded: each goes to a temporary file in its target directory, and
/// the renames happen after every temporary file is complete.
pub struct Outputs {
    dir: PathBuf,
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Outputs { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn add(&mut self, name: impl AsRef<Path>, content: impl Into<Vec<u8>>) {
        self.files.push((self.dir.join(name), content.into()));
    }

    pub fn commit(self) -> Result<Vec<PathBuf>, CliError> {
        let mut staged = Vec::new();
        for (path, content) in &self.files {
            let parent = path.parent().unwrap_or(Path::new("."));
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
            let mut tmp = NamedTempFile::new_in(parent).map_err(|e| CliError::io(parent, e))?;
            tmp.write_all(content).map_err(|e| CliError::io(path, e))?;
            tmp.as_file().sync_all().map_err(|e| CliError::io(path, e))?;
            staged.push((tmp, path.clone()));
        }
        let mut written = Vec::new();
        for (tmp, path) in staged {
            tmp.persist(&path).map_err(|e| CliError::io(&path, e.error))?;
            written.push(path);
        }
        Ok(written)
    }
}
