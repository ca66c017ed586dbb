//! Flat key=value configuration with flag precedence.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use calkit_core::{Error, Result};

/// Parsed config file, `key = value` per line, `#` comments.
#[derive(Debug, Default, Clone)]
pub struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)?;
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected key=value, got {line:?}"),
                });
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self(map))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::invalid(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }
}

/// Global options after merging flags over the config file.
#[derive(Clone)]
pub struct Resolved {
    file: FileConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Every resolved value, echoed into report provenance.
    pub echo: BTreeMap<String, String>,
}

impl Resolved {
    pub fn new(file: FileConfig, seed_flag: Option<u64>, out_flag: Option<PathBuf>) -> Self {
        let seed = seed_flag
            .or_else(|| file.get("seed").ok().flatten())
            .unwrap_or(42);
        let out_dir = out_flag
            .or_else(|| file.get::<String>("out").ok().flatten().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let mut echo = BTreeMap::new();
        echo.insert("seed".into(), seed.to_string());
        echo.insert("out".into(), out_dir.display().to_string());
        Self {
            file,
            seed,
            out_dir,
            echo,
        }
    }

    /// Flag > config file > default, recording the winner for provenance.
    pub fn value<T: FromStr + ToString + Clone>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: T,
    ) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => self.file.get::<T>(key)?.unwrap_or(default),
        };
        self.echo.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    pub fn ensure_out_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out_dir)?;
        Ok(())
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn file_values_fill_in_missing_flags() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "# comment\nseed = 7\nbins=20").unwrap();
        let file = FileConfig::load(Some(tmp.path())).unwrap();
        let mut resolved = Resolved::new(file, None, None);
        assert_eq!(resolved.seed, 7);
        assert_eq!(resolved.value("bins", None::<usize>, 15).unwrap(), 20);
        // Flag wins over file.
        assert_eq!(resolved.value("bins", Some(9usize), 15).unwrap(), 9);
    }

    #[test]
    fn malformed_line_is_a_parse_error() {
        let mut tmp = tempfile::NamedTempFile::new().unwrap();
        writeln!(tmp, "just a line").unwrap();
        assert!(FileConfig::load(Some(tmp.path())).is_err());
    }
}
