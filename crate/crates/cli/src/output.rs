//! Artifact writing with provenance headers and all-or-nothing stage commits.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Digest and seed stamped as the first line of every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub digest: String,
    pub seed: u64,
}

impl Provenance {
    pub fn line(&self) -> String {
        format!("# refnet config_digest={} seed={}\n", self.digest, self.seed)
    }

    /// True when `path` exists and was written under this provenance.
    pub fn matches(&self, path: &Path) -> bool {
        fs::read_to_string(path).is_ok_and(|s| s.starts_with(&self.line()))
    }
}

/// Artifacts of one stage. Files are written as `.partial` siblings and only
/// renamed into place by [`Stage::commit`]; dropping an uncommitted stage
/// removes them.
pub struct Stage<'a> {
    name: &'static str,
    dir: &'a Path,
    prov: &'a Provenance,
    pending: Vec<(PathBuf, PathBuf)>,
}

impl<'a> Stage<'a> {
    pub fn new(name: &'static str, dir: &'a Path, prov: &'a Provenance) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::stage(name, format!("{}: {e}", dir.display())))?;
        Ok(Stage {
            name,
            dir,
            prov,
            pending: Vec::new(),
        })
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn err(&self, e: impl std::fmt::Display) -> CliError {
        CliError::stage(self.name, e)
    }

    /// Writes `file` with the provenance line followed by `body`'s output.
    pub fn write(
        &mut self,
        file: &str,
        body: impl FnOnce(&mut Vec<u8>) -> refnet::Result<()>,
    ) -> Result<(), CliError> {
        let mut buf = self.prov.line().into_bytes();
        body(&mut buf).map_err(|e| self.err(e))?;
        let target = self.dir.join(file);
        let tmp = self.dir.join(format!("{file}.partial"));
        fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(&buf))
            .map_err(|e| self.err(format!("{}: {e}", tmp.display())))?;
        self.pending.push((tmp, target));
        Ok(())
    }

    pub fn write_text(&mut self, file: &str, text: &str) -> Result<(), CliError> {
        self.write(file, |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })
    }

    pub fn commit(mut self) -> Result<Vec<PathBuf>, CliError> {
        let mut done = Vec::new();
        for (tmp, target) in std::mem::take(&mut self.pending) {
            fs::rename(&tmp, &target).map_err(|e| self.err(format!("{}: {e}", target.display())))?;
            done.push(target);
        }
        Ok(done)
    }
}

impl Drop for Stage<'_> {
    fn drop(&mut self) {
        for (tmp, _) in &self.pending {
            let _ = fs::remove_file(tmp);
        }
    }
}
