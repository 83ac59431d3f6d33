use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::designspace::{self, DesignSpace, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::layers::AttentionForm;
use crate::train::{Task, DEFAULT_SPLITS};
use crate::transform::MetaPath;

/// Which configurations a plan runs.
#[derive(Clone, Debug, PartialEq)]
pub enum SpaceChoice {
    Full,
    Condensed,
    /// One configuration per non-empty line, written as space-separated
    /// `key=value` pairs.
    Explicit(PathBuf),
}

/// An experiment: graph, task, which configurations to sample, and where
/// results go. Parsed from flat `key = value` text; list values are
/// comma-separated and `#` starts a comment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    pub graph: PathBuf,
    pub task: Task,
    pub space: SpaceChoice,
    pub n: usize,
    pub strata_hits: usize,
    pub seed: u64,
    pub splits: usize,
    pub parallelism: usize,
    pub output: PathBuf,
    pub metapaths: Vec<MetaPath>,
    pub attention_form: AttentionForm,
    /// Caps every trial's epoch count; recorded configs keep their sampled
    /// value.
    pub max_epochs: Option<usize>,
    /// Expand every sampled configuration over this dimension's choices so
    /// the results can be ranked along it.
    pub dimension: Option<String>,
}

const KEYS: &[&str] = &[
    "graph",
    "task",
    "space",
    "configs",
    "n",
    "strata_hits",
    "seed",
    "splits",
    "parallelism",
    "output",
    "metapaths",
    "attention_form",
    "max_epochs",
    "dimension",
];

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Plan(format!("`{key}`: `{v}` is not a valid number")))
}

impl ExperimentPlan {
    /// Parses plan text. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Plan(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim().to_string();
            if !KEYS.contains(&k.as_str()) {
                return Err(Error::Plan(format!("line {}: unknown key `{k}`", lineno + 1)));
            }
            if kv.insert(k.clone(), v.trim().to_string()).is_some() {
                return Err(Error::Plan(format!("line {}: `{k}` given twice", lineno + 1)));
            }
        }
        let required = |k: &str| kv.get(k).cloned().ok_or_else(|| Error::Plan(format!("missing `{k}`")));
        let path = |p: String| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let space = match kv.get("space").map(String::as_str).unwrap_or("full") {
            "full" => SpaceChoice::Full,
            "condensed" => SpaceChoice::Condensed,
            "explicit" => SpaceChoice::Explicit(path(required("configs")?)),
            other => return Err(Error::Plan(format!("`space`: `{other}` is not full, condensed or explicit"))),
        };
        let metapaths = kv
            .get("metapaths")
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<Vec<MetaPath>>>()
            })
            .transpose()?
            .unwrap_or_default();
        let opt_num = |k: &str, default: usize| -> Result<usize> {
            kv.get(k).map_or(Ok(default), |v| parse_num(k, v))
        };
        let plan = ExperimentPlan {
            graph: path(required("graph")?),
            task: required("task")?.parse()?,
            space,
            n: opt_num("n", DEFAULT_SAMPLES)?,
            strata_hits: opt_num("strata_hits", 2)?,
            seed: kv.get("seed").map_or(Ok(0), |v| parse_num("seed", v))?,
            splits: opt_num("splits", DEFAULT_SPLITS)?,
            parallelism: opt_num("parallelism", 1)?.max(1),
            output: path(required("output")?),
            metapaths,
            attention_form: kv.get("attention_form").map_or(Ok(AttentionForm::Gat), |v| v.parse())?,
            max_epochs: kv.get("max_epochs").map(|v| parse_num("max_epochs", v)).transpose()?,
            dimension: kv.get("dimension").cloned(),
        };
        if plan.splits == 0 {
            return Err(Error::Plan("`splits` must be at least 1".into()));
        }
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// The sampled space, for `full` and `condensed` plans.
    pub fn design_space(&self) -> Option<DesignSpace> {
        match self.space {
            SpaceChoice::Full => Some(designspace::full_space()),
            SpaceChoice::Condensed => Some(designspace::condensed_space()),
            SpaceChoice::Explicit(_) => None,
        }
    }

    /// Plan text covering everything that affects results, in a fixed key
    /// order. Parallelism and the output path are left out.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let space = match &self.space {
            SpaceChoice::Full => "full".to_string(),
            SpaceChoice::Condensed => "condensed".to_string(),
            SpaceChoice::Explicit(_) => "explicit".to_string(),
        };
        let metapaths: Vec<String> = self.metapaths.iter().map(ToString::to_string).collect();
        let _ = writeln!(s, "task={}", self.task);
        let _ = writeln!(s, "space={space}");
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "strata_hits={}", self.strata_hits);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "splits={}", self.splits);
        let _ = writeln!(s, "metapaths={}", metapaths.join(","));
        let _ = writeln!(s, "attention_form={}", self.attention_form);
        let _ = writeln!(s, "max_epochs={}", self.max_epochs.map_or("none".into(), |m| m.to_string()));
        let _ = writeln!(s, "dimension={}", self.dimension.as_deref().unwrap_or("none"));
        s
    }

    /// Hex SHA-256 of the canonical plan, the graph bundle bytes and, for
    /// explicit spaces, the config list bytes.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.canonical().as_bytes());
        let mut files: Vec<PathBuf> = fs::read_dir(&self.graph)
            .map_err(|e| Error::Plan(format!("graph bundle {}: {e}", self.graph.display())))?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        files.retain(|p| p.is_file());
        files.sort();
        for f in files {
            h.update(f.file_name().unwrap_or_default().as_encoded_bytes());
            h.update(fs::read(&f)?);
        }
        if let SpaceChoice::Explicit(p) = &self.space {
            h.update(fs::read(p)?);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_with_defaults_and_comments() {
        let text = "graph = data  # bundle\ntask = nc:paper:4\noutput = out.ndrec\nmetapaths = PAP=written_by/writes\n";
        let p = ExperimentPlan::parse(text, Path::new("/base")).unwrap();
        assert_eq!(p.graph, PathBuf::from("/base/data"));
        assert_eq!((p.n, p.strata_hits, p.splits, p.parallelism), (264, 2, 3, 1));
        assert_eq!(p.metapaths.len(), 1);
        assert_eq!(p.space, SpaceChoice::Full);
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        assert!(ExperimentPlan::parse("graph = g\ntask = lp:r\noutput = o\ncolour = red\n", Path::new(".")).is_err());
        assert!(ExperimentPlan::parse("graph = g\noutput = o\n", Path::new(".")).is_err());
    }

    #[test]
    fn canonical_ignores_parallelism_and_output() {
        let a = ExperimentPlan::parse("graph=g\ntask=lp:r\noutput=a\nparallelism=8\n", Path::new(".")).unwrap();
        let b = ExperimentPlan::parse("graph=g\ntask=lp:r\noutput=b\n", Path::new(".")).unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
