//! Artifact writers. Every file carries the config hash and seed: JSON as
//! fields, CSV as a leading `#` comment, SVG as an XML comment.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::Failure;

#[derive(Debug, Clone, Serialize)]
pub struct Stamp {
    pub config_hash: String,
    pub seed: u64,
}

impl Stamp {
    fn line(&self) -> String {
        format!("config_hash={} seed={}", self.config_hash, self.seed)
    }
}

pub struct OutDir {
    pub dir: PathBuf,
    pub stamp: Stamp,
    pub verbose: bool,
}

impl OutDir {
    pub fn create(dir: PathBuf, stamp: Stamp, verbose: bool) -> Result<Self, Failure> {
        fs::create_dir_all(&dir).map_err(|e| Failure::new(crate::EXIT_INPUT, format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir, stamp, verbose })
    }

    fn announce(&self, path: &Path) {
        println!("{}", path.display());
    }

    pub fn json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf, Failure> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            #[serde(flatten)]
            stamp: &'a Stamp,
            #[serde(flatten)]
            body: &'a T,
        }
        let path = self.dir.join(name);
        let text = serde_json::to_string_pretty(&Stamped { stamp: &self.stamp, body })
            .map_err(|e| Failure::new(1, format!("serializing {name}: {e}")))?;
        fs::write(&path, text + "\n")?;
        self.announce(&path);
        Ok(path)
    }

    /// Writes `# config_hash=… seed=…` and then whatever `fill` emits.
    pub fn csv<F>(&self, name: &str, fill: F) -> Result<PathBuf, Failure>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<(), Failure>,
    {
        let path = self.dir.join(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# {}", self.stamp.line())?;
        fill(&mut w)?;
        w.flush()?;
        self.announce(&path);
        Ok(path)
    }

    pub fn svg(&self, name: &str, svg: &str) -> Result<PathBuf, Failure> {
        let path = self.dir.join(name);
        fs::write(&path, format!("<!-- {} -->\n{svg}", self.stamp.line()))?;
        self.announce(&path);
        Ok(path)
    }

    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }
}
