use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            _ => Err(Error::Format(format!("unknown split `{}` (expected train, valid or test)", s))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub split: Split,
    pub clean: PathBuf,
    pub noise: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

/// Tab-separated list of `split, clean, noise|-, labels|-` entries.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads a manifest; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let resolve = |s: &str| -> Option<PathBuf> {
            if s == "-" {
                None
            } else {
                let p = Path::new(s);
                Some(if p.is_absolute() { p.to_path_buf() } else { base.join(p) })
            }
        };
        let mut entries = Vec::new();
        for (no, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(Error::Format(format!(
                    "manifest line {}: expected 4 tab-separated fields, got {}",
                    no + 1,
                    fields.len()
                )));
            }
            let split: Split = fields[0]
                .parse()
                .map_err(|e| Error::Format(format!("manifest line {}: {}", no + 1, e)))?;
            let clean = resolve(fields[1]).ok_or_else(|| Error::Format(format!("manifest line {}: clean path is required", no + 1)))?;
            entries.push(ManifestEntry {
                split,
                clean,
                noise: resolve(fields[2]),
                labels: resolve(fields[3]),
            });
        }
        let manifest = Manifest { entries };
        manifest.check_disjoint()?;
        Ok(manifest)
    }

    fn check_disjoint(&self) -> Result<()> {
        let mut seen: BTreeMap<&Path, Split> = BTreeMap::new();
        for e in &self.entries {
            if let Some(&other) = seen.get(e.clean.as_path()) {
                if other != e.split {
                    return Err(Error::Format(format!(
                        "{} appears in both the {} and {} splits",
                        e.clean.display(),
                        other,
                        e.split
                    )));
                }
            }
            seen.insert(&e.clean, e.split);
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Distinct noise files listed for `split`, in order of first appearance.
    pub fn noise_pool(&self, split: Split) -> Vec<PathBuf> {
        let mut pool: Vec<PathBuf> = Vec::new();
        for e in self.split(split) {
            if let Some(n) = &e.noise {
                if !pool.contains(n) {
                    pool.push(n.clone());
                }
            }
        }
        pool
    }

    /// Serializes with paths relative to `base` where possible.
    pub fn to_tsv(&self, base: &Path) -> String {
        let show = |p: &Option<PathBuf>| match p {
            Some(p) => p.strip_prefix(base).unwrap_or(p).display().to_string(),
            None => "-".to_string(),
        };
        self.entries
            .iter()
            .map(|e| format!("{}\t{}\t{}\t{}\n", e.split, show(&Some(e.clean.clone())), show(&e.noise), show(&e.labels)))
            .collect()
    }
}
