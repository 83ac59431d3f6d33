use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{choice_enum, Activation, AttentionForm, Connectivity, ConvKind, MacroKind};
use crate::train::{OptimizerKind, Task};
use crate::transform::MetaPath;

choice_enum! {
    /// Graph transformation plus aggregation regime.
    ModelFamily { Homogenization => "Homogenization", Relation => "Relation", Metapath => "Metapath" }
}

impl ModelFamily {
    /// Whether the family reduces per-subgraph outputs with a macro reducer.
    pub fn is_dual(self) -> bool {
        !matches!(self, ModelFamily::Homogenization)
    }
}

/// Names of every searchable dimension, common ones first.
pub const DIMENSIONS: &[&str] = &[
    "bn",
    "dropout",
    "activation",
    "l2norm",
    "connectivity",
    "pre_layers",
    "mp_layers",
    "post_layers",
    "optimizer",
    "lr",
    "epochs",
    "hidden",
    "model_family",
    "micro",
    "macro",
];

/// One point in the design space together with the context it runs in
/// (meta-paths, task, seed, attention form).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub model_family: ModelFamily,
    pub micro: ConvKind,
    /// Absent for the homogenization family.
    pub macro_agg: Option<MacroKind>,
    /// Attention logits for GAT under direct aggregation.
    pub attention_form: AttentionForm,
    pub bn: bool,
    pub dropout: f64,
    pub activation: Activation,
    pub l2norm: bool,
    pub connectivity: Connectivity,
    pub pre_layers: usize,
    pub mp_layers: usize,
    pub post_layers: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub epochs: usize,
    pub hidden: usize,
    pub metapaths: Vec<MetaPath>,
    pub task: Task,
    pub seed: u64,
}

fn bool_token(b: bool) -> String {
    if b { "True" } else { "False" }.to_string()
}

fn parse_bool(dim: &str, s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "t" | "1" => Ok(true),
        "false" | "f" | "0" => Ok(false),
        _ => Err(Error::Config(vec![format!("{dim}: `{s}` is not a boolean")])),
    }
}

fn parse_num<T: FromStr>(dim: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(vec![format!("{dim}: `{s}` is not a number")]))
}

fn parse_choice<T: FromStr<Err = Error>>(dim: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|e| match e {
        Error::Config(msgs) => Error::Config(msgs.into_iter().map(|m| format!("{dim}: {m}")).collect()),
        other => other,
    })
}

impl DesignConfig {
    /// The relation-family RGCN point with a small, sensible set of common
    /// choices. A convenient base for tests and examples.
    pub fn rgcn(task: Task) -> Self {
        DesignConfig {
            model_family: ModelFamily::Relation,
            micro: ConvKind::Sage,
            macro_agg: Some(MacroKind::Sum),
            attention_form: AttentionForm::Gat,
            bn: false,
            dropout: 0.0,
            activation: Activation::Relu,
            l2norm: false,
            connectivity: Connectivity::Stack,
            pre_layers: 1,
            mp_layers: 2,
            post_layers: 1,
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            epochs: 100,
            hidden: 64,
            metapaths: Vec::new(),
            task,
            seed: 0,
        }
    }

    /// The meta-path-family HAN point over `metapaths`.
    pub fn han(task: Task, metapaths: Vec<MetaPath>) -> Self {
        DesignConfig {
            model_family: ModelFamily::Metapath,
            micro: ConvKind::Gat,
            macro_agg: Some(MacroKind::Attention),
            metapaths,
            ..DesignConfig::rgcn(task)
        }
    }

    /// Token of dimension `dim`, or `None` when it does not apply (macro on
    /// the homogenization family). Unknown names are an error.
    pub fn get(&self, dim: &str) -> Result<Option<String>> {
        Ok(Some(match dim {
            "bn" => bool_token(self.bn),
            "dropout" => self.dropout.to_string(),
            "activation" => self.activation.to_string(),
            "l2norm" => bool_token(self.l2norm),
            "connectivity" => self.connectivity.to_string(),
            "pre_layers" => self.pre_layers.to_string(),
            "mp_layers" => self.mp_layers.to_string(),
            "post_layers" => self.post_layers.to_string(),
            "optimizer" => self.optimizer.to_string(),
            "lr" => self.lr.to_string(),
            "epochs" => self.epochs.to_string(),
            "hidden" => self.hidden.to_string(),
            "model_family" => self.model_family.to_string(),
            "micro" => self.micro.to_string(),
            "macro" => match self.macro_agg {
                Some(m) => m.to_string(),
                None => return Ok(None),
            },
            _ => return Err(unknown_dimension(dim)),
        }))
    }

    /// Sets dimension `dim` from its token. Setting `model_family` to
    /// homogenization clears the macro reducer; setting `macro` on that
    /// family is rejected.
    pub fn set(&mut self, dim: &str, token: &str) -> Result<()> {
        match dim {
            "bn" => self.bn = parse_bool(dim, token)?,
            "dropout" => self.dropout = parse_num(dim, token)?,
            "activation" => self.activation = parse_choice(dim, token)?,
            "l2norm" => self.l2norm = parse_bool(dim, token)?,
            "connectivity" => self.connectivity = parse_choice(dim, token)?,
            "pre_layers" => self.pre_layers = parse_num(dim, token)?,
            "mp_layers" => self.mp_layers = parse_num(dim, token)?,
            "post_layers" => self.post_layers = parse_num(dim, token)?,
            "optimizer" => self.optimizer = parse_choice(dim, token)?,
            "lr" => self.lr = parse_num(dim, token)?,
            "epochs" => self.epochs = parse_num(dim, token)?,
            "hidden" => self.hidden = parse_num(dim, token)?,
            "model_family" => {
                self.model_family = parse_choice(dim, token)?;
                if !self.model_family.is_dual() {
                    self.macro_agg = None;
                }
            }
            "micro" => self.micro = parse_choice(dim, token)?,
            "macro" => {
                if !self.model_family.is_dual() {
                    return Err(Error::Inapplicable {
                        dim: dim.to_string(),
                        reason: format!("{} family has no macro aggregation", self.model_family),
                    });
                }
                self.macro_agg = Some(parse_choice(dim, token)?);
            }
            _ => return Err(unknown_dimension(dim)),
        }
        Ok(())
    }

    /// Flat `key=value` view: every dimension in [`DIMENSIONS`] order
    /// (`macro` reads `none` when absent), then the context fields.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut pairs: Vec<(String, String)> = DIMENSIONS
            .iter()
            .map(|d| {
                let v = self.get(d).expect("known dimension").unwrap_or_else(|| "none".into());
                (d.to_string(), v)
            })
            .collect();
        pairs.push(("attention_form".into(), self.attention_form.to_string()));
        pairs.push((
            "metapaths".into(),
            self.metapaths.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(","),
        ));
        pairs.push(("task".into(), self.task.to_string()));
        pairs.push(("seed".into(), self.seed.to_string()));
        pairs
    }

    /// Inverse of [`DesignConfig::to_pairs`]. Keys missing from `pairs` keep
    /// the values of `base`; unknown keys are errors. All problems are
    /// reported together.
    pub fn from_pairs<'a>(base: &DesignConfig, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = base.clone();
        let mut errors = Vec::new();
        let mut pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        // the family decides whether macro applies, so it goes first
        pairs.sort_by_key(|(k, _)| *k != "model_family");
        for (k, v) in pairs {
            let v = v.trim();
            let res = match k {
                "macro" if v.eq_ignore_ascii_case("none") => {
                    cfg.macro_agg = None;
                    Ok(())
                }
                "attention_form" => parse_choice(k, v).map(|f| cfg.attention_form = f),
                "metapaths" => v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(MetaPath::from_str)
                    .collect::<Result<Vec<_>>>()
                    .map(|m| cfg.metapaths = m),
                "task" => v.parse().map(|t| cfg.task = t),
                "seed" => parse_num(k, v).map(|s| cfg.seed = s),
                _ => cfg.set(k, v),
            };
            if let Err(e) = res {
                match e {
                    Error::Config(msgs) => errors.extend(msgs),
                    other => errors.push(other.to_string()),
                }
            }
        }
        if errors.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(errors))
        }
    }
}

fn unknown_dimension(dim: &str) -> Error {
    Error::Config(vec![format!("unknown dimension `{dim}`")])
}

impl fmt::Display for DesignConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pairs = self.to_pairs();
        let parts: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}
