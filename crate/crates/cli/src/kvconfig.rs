//! Plain `key = value` configuration files.
//!
//! Keys are the long flag names of a subcommand (`top-n` and `top_n` are the
//! same key). Lists are comma- or whitespace-separated. `#` starts a comment.
//! Values from the file are turned into flags placed before the command
//! line's own, and a key is skipped when the command line sets it, so flags
//! always win.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvFile {
    pub values: BTreeMap<String, String>,
}

impl KvFile {
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(CliError::Usage(format!("{origin}:{}: expected `key = value`", i + 1)));
            };
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(CliError::Usage(format!("{origin}:{}: empty key", i + 1)));
            }
            if values.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::Usage(format!("{origin}:{}: duplicate key {key}", i + 1)));
            }
        }
        Ok(KvFile { values })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Core(wordtrust::Error::Io { path: path.to_path_buf(), source: e }))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Flags for every key not already given on the command line. `known`
    /// lists the subcommand's long flag names and whether each takes a list.
    pub fn to_args(&self, known: &[(String, bool)], present: &[String], origin: &str) -> Result<Vec<String>, CliError> {
        let mut out = Vec::new();
        for (key, value) in &self.values {
            let Some((_, is_list)) = known.iter().find(|(k, _)| k == key) else {
                return Err(CliError::Usage(format!("{origin}: unknown key {key}")));
            };
            if key == "config" {
                return Err(CliError::Usage(format!("{origin}: a config file cannot name another")));
            }
            if present.contains(key) {
                continue;
            }
            out.push(format!("--{key}"));
            if *is_list {
                out.extend(value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(String::from));
            } else {
                out.push(value.clone());
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_skips_keys_set_on_the_command_line() {
        let kv = KvFile::parse("# tool\ntop_n = 5\nembeddings = a.vec, b.vec\n\nseed=3 # inline\n", "t").unwrap();
        let known = vec![("top-n".to_string(), false), ("embeddings".to_string(), true), ("seed".to_string(), false)];
        let args = kv.to_args(&known, &["seed".to_string()], "t").unwrap();
        assert_eq!(args, ["--embeddings", "a.vec", "b.vec", "--top-n", "5"]);
    }

    #[test]
    fn rejects_malformed_and_unknown() {
        assert!(KvFile::parse("novalue\n", "t").is_err());
        assert!(KvFile::parse("a = 1\na = 2\n", "t").is_err());
        let kv = KvFile::parse("colour = red\n", "t").unwrap();
        assert!(kv.to_args(&[], &[], "t").is_err());
    }
}
