use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Version of the manifest layout below.
pub const MANIFEST_SCHEMA: u32 = 1;

pub const OUTPUT_ROOT_ENV: &str = "JDFILTER_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub experiment: String,
    pub model: String,
    pub config_hash: String,
    pub crate_version: String,
    pub started_unix: u64,
    pub wall_time_s: f64,
    pub pass: bool,
    /// Every named pass flag of the run.
    pub checks: Vec<Check>,
    /// Data files, relative to the output directory.
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

/// Directory receiving one run's files; remembers what was written.
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: PathBuf) -> Result<Self, Error> {
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Self { root, files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn open(&mut self, name: &str) -> Result<BufWriter<File>, Error> {
        let path = self.root.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(BufWriter::new(file))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w).map_err(|e| Error::io(self.root.join(name), e))?;
        w.flush().map_err(|e| Error::io(self.root.join(name), e))
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = T>) -> Result<(), Error> {
        let mut w = self.open(name)?;
        for row in rows {
            serde_json::to_writer(&mut w, &row)?;
            writeln!(w).map_err(|e| Error::io(self.root.join(name), e))?;
        }
        w.flush().map_err(|e| Error::io(self.root.join(name), e))
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<BufWriter<File>>, Error> {
        Ok(csv::Writer::from_writer(self.open(name)?))
    }

    /// A raw writer, for formats produced elsewhere.
    pub fn raw(&mut self, name: &str) -> Result<BufWriter<File>, Error> {
        self.open(name)
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), Error> {
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(manifest)? + "\n";
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

/// `$JDFILTER_OUTPUT_ROOT/<output_dir>` when the variable is set, else `output_dir`.
pub fn resolve_output_dir(output_dir: &Path, root_override: Option<&Path>) -> PathBuf {
    let env = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    match root_override.map(Path::to_path_buf).or(env) {
        Some(root) if output_dir.is_relative() => root.join(output_dir),
        Some(root) => root.join(output_dir.file_name().unwrap_or(output_dir.as_os_str())),
        None => output_dir.to_path_buf(),
    }
}
