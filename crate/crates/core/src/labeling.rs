//! Labels derived from capture file names or directory placement.
//!
//! A [`NamingScheme`] lists label dimensions in resolution order, each with
//! its known tokens, aliases and an optional default. Scheme files are TOML;
//! the built-in ISCX scheme (`schemes/iscx.toml`) doubles as the format
//! reference.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Component, Path};

use serde::Deserialize;

const ISCX_SCHEME: &str = include_str!("../schemes/iscx.toml");
const CAPTURE_EXTENSIONS: [&str; 3] = [".pcapng", ".pcap", ".cap"];

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("cannot read naming scheme: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid naming scheme: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid naming scheme: {0}")]
    Invalid(String),
    #[error("{file} is not under {root}")]
    NotUnderRoot { file: String, root: String },
}

/// Ordered dimension → token labels of one capture file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<(String, String)>,
    /// Tokens that matched no dimension, or a dimension already labeled.
    pub unmatched: Vec<String>,
}

impl LabelSet {
    pub fn get(&self, dimension: &str) -> Option<&str> {
        self.labels
            .iter()
            .find(|(d, _)| d == dimension)
            .map(|(_, t)| t.as_str())
    }

    /// Sets a label; an existing dimension keeps its position.
    pub fn insert(&mut self, dimension: impl Into<String>, token: impl Into<String>) {
        let (dimension, token) = (dimension.into(), token.into().to_lowercase());
        match self.labels.iter_mut().find(|(d, _)| *d == dimension) {
            Some(entry) => entry.1 = token,
            None => self.labels.push((dimension, token)),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.labels.iter().map(|(d, t)| (d.as_str(), t.as_str()))
    }

    pub fn dimensions(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(|(d, _)| d.as_str())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (d, t)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}: {t}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dimension {
    pub name: String,
    #[serde(default)]
    pub tokens: Vec<String>,
    /// Alternative spelling → canonical token.
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
    pub default: Option<String>,
}

impl Dimension {
    fn resolve(&self, token: &str) -> Option<&str> {
        if let Some(t) = self.tokens.iter().find(|t| *t == token) {
            return Some(t);
        }
        self.aliases.get(token).map(String::as_str)
    }
}

fn default_separators() -> Vec<char> {
    vec!['_', '-', '.']
}

fn default_strip() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamingScheme {
    #[serde(rename = "dimension", default)]
    pub dimensions: Vec<Dimension>,
    #[serde(default = "default_separators")]
    pub separators: Vec<char>,
    /// Strip trailing digits (optionally followed by one letter) before lookup.
    #[serde(default = "default_strip")]
    pub strip_suffix: bool,
    /// Token → several tokens looked up individually.
    #[serde(default)]
    pub compounds: BTreeMap<String, Vec<String>>,
}

impl NamingScheme {
    pub fn iscx() -> NamingScheme {
        NamingScheme::parse(ISCX_SCHEME).expect("built-in scheme is valid")
    }

    pub fn parse(text: &str) -> Result<NamingScheme, LabelError> {
        let mut scheme: NamingScheme = toml::from_str(text)?;
        scheme.normalize();
        scheme.check()?;
        Ok(scheme)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<NamingScheme, LabelError> {
        NamingScheme::parse(&std::fs::read_to_string(path)?)
    }

    fn normalize(&mut self) {
        for d in &mut self.dimensions {
            d.tokens.iter_mut().for_each(|t| *t = t.to_lowercase());
            d.aliases = std::mem::take(&mut d.aliases)
                .into_iter()
                .map(|(k, v)| (k.to_lowercase(), v.to_lowercase()))
                .collect();
            if let Some(def) = &mut d.default {
                *def = def.to_lowercase();
            }
        }
        self.compounds = std::mem::take(&mut self.compounds)
            .into_iter()
            .map(|(k, v)| (k.to_lowercase(), v.into_iter().map(|t| t.to_lowercase()).collect()))
            .collect();
    }

    fn check(&self) -> Result<(), LabelError> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.dimensions {
            if !seen.insert(d.name.as_str()) {
                return Err(LabelError::Invalid(format!("dimension {:?} declared twice", d.name)));
            }
        }
        Ok(())
    }

    pub fn dimension_names(&self) -> Vec<&str> {
        self.dimensions.iter().map(|d| d.name.as_str()).collect()
    }

    fn lookup(&self, token: &str) -> Option<(&str, &str)> {
        self.dimensions
            .iter()
            .find_map(|d| d.resolve(token).map(|t| (d.name.as_str(), t)))
    }
}

/// Candidate spellings of a token: as is, then with trailing digits removed,
/// then with a digit run plus one final letter removed (`video2b`).
fn candidates(token: &str, strip: bool) -> Vec<&str> {
    let mut out = vec![token];
    if strip {
        let no_digits = token.trim_end_matches(|c: char| c.is_ascii_digit());
        if no_digits.len() < token.len() {
            out.push(no_digits);
        }
        let mut chars = token.chars();
        if chars.next_back().is_some_and(|c| c.is_ascii_alphabetic()) {
            let head = chars.as_str();
            let stem = head.trim_end_matches(|c: char| c.is_ascii_digit());
            if stem.len() < head.len() {
                out.push(stem);
            }
        }
    }
    out
}

fn strip_extension(name: &str) -> &str {
    for ext in CAPTURE_EXTENSIONS {
        if let Some(stem) = name.strip_suffix(ext) {
            return stem;
        }
    }
    name
}

/// Labels encoded in a capture file name. Only the final path component is
/// considered.
pub fn labels_from_filename(name: &str, scheme: &NamingScheme) -> LabelSet {
    let base = Path::new(name)
        .file_name()
        .map_or_else(|| name.to_string(), |n| n.to_string_lossy().into_owned())
        .to_lowercase();
    let stem = strip_extension(&base);
    let mut set = LabelSet::default();
    for raw in stem.split(|c| scheme.separators.contains(&c)) {
        apply_token(raw, scheme, &mut set, 0);
    }
    for d in &scheme.dimensions {
        if let (None, Some(def)) = (set.get(&d.name), &d.default) {
            set.insert(d.name.clone(), def.clone());
        }
    }
    // keep scheme order regardless of token order
    set.labels
        .sort_by_key(|(dim, _)| scheme.dimensions.iter().position(|d| d.name == *dim));
    set
}

fn apply_token(raw: &str, scheme: &NamingScheme, set: &mut LabelSet, depth: usize) {
    let spellings = candidates(raw, scheme.strip_suffix);
    if spellings.iter().any(|s| s.is_empty()) {
        return;
    }
    for s in spellings.iter().filter(|s| !s.is_empty()) {
        if let Some((dim, token)) = scheme.lookup(s) {
            if set.get(dim).is_some() {
                set.unmatched.push(raw.to_string());
            } else {
                set.insert(dim, token);
            }
            return;
        }
        if depth == 0 {
            if let Some(parts) = scheme.compounds.get(*s) {
                for part in parts {
                    apply_token(part, scheme, set, depth + 1);
                }
                return;
            }
        }
    }
    set.unmatched.push(raw.to_string());
}

/// One label per directory between `root` and the file: `dir_0`, `dir_1`, ...
pub fn labels_from_directory(file: &Path, root: &Path) -> Result<LabelSet, LabelError> {
    let rel = file.strip_prefix(root).map_err(|_| LabelError::NotUnderRoot {
        file: file.display().to_string(),
        root: root.display().to_string(),
    })?;
    let mut set = LabelSet::default();
    let dirs: Vec<_> = rel.parent().map(|p| p.components().collect()).unwrap_or_default();
    for (i, c) in dirs.iter().filter(|c| matches!(c, Component::Normal(_))).enumerate() {
        set.insert(format!("dir_{i}"), c.as_os_str().to_string_lossy().into_owned());
    }
    Ok(set)
}
