//! Design spaces as conditional Cartesian products of choice tokens, exact
//! counting and enumeration, validation, and controlled random search.
//!
//! Points are indexed: for each model family the applicable dimensions form
//! a mixed-radix number, and families are laid out one after another. That
//! makes counting, enumeration and uniform sampling the same computation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hgraph::Schema;
use crate::layers::{splitmix64, Activation, Connectivity, ConvKind, MacroKind};
use crate::model::{DesignConfig, ModelFamily};
use crate::train::OptimizerKind;

/// Number of base configurations in the controlled random search.
pub const DEFAULT_SAMPLES: usize = 264;

/// One searchable dimension and its ordered choice tokens.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub choices: Vec<String>,
}

impl Dimension {
    pub fn new<S: ToString>(name: &str, choices: impl IntoIterator<Item = S>) -> Self {
        Dimension {
            name: name.to_string(),
            choices: choices.into_iter().map(|c| c.to_string()).collect(),
        }
    }

    /// Whether the dimension takes a value under `family`. Only the macro
    /// reducer is conditional.
    pub fn applies(&self, family: ModelFamily) -> bool {
        self.name != "macro" || family.is_dual()
    }

    fn position(&self, token: &str) -> Option<usize> {
        self.choices.iter().position(|c| c == token)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpace {
    pub name: String,
    pub dimensions: Vec<Dimension>,
}

fn tokens<T: ToString>(items: &[T]) -> Vec<String> {
    items.iter().map(ToString::to_string).collect()
}

fn common_dimensions(condensed: bool) -> Vec<Dimension> {
    let pick = |full: Vec<String>, small: &[&str]| -> Vec<String> {
        if condensed {
            small.iter().map(|s| s.to_string()).collect()
        } else {
            full
        }
    };
    vec![
        Dimension::new("bn", ["True", "False"]),
        Dimension::new("dropout", pick(tokens(&["0", "0.3", "0.6"]), &["0", "0.3"])),
        Dimension::new(
            "activation",
            pick(tokens(Activation::ALL), &["ELU", "LeakyReLU", "Tanh"]),
        ),
        Dimension::new("l2norm", ["True", "False"]),
        Dimension::new(
            "connectivity",
            pick(tokens(Connectivity::ALL), &["SKIP-SUM", "SKIP-CAT"]),
        ),
        Dimension::new("pre_layers", pick(tokens(&[1, 2, 3]), &["1"])),
        Dimension::new("mp_layers", 1..=6),
        Dimension::new("post_layers", pick(tokens(&[1, 2, 3]), &["1", "2"])),
        Dimension::new("optimizer", pick(tokens(OptimizerKind::ALL), &["Adam"])),
        Dimension::new(
            "lr",
            pick(tokens(&["0.1", "0.01", "0.001", "0.0001"]), &["0.1", "0.01"]),
        ),
        Dimension::new("epochs", pick(tokens(&[100, 200, 400]), &["400"])),
        Dimension::new("hidden", pick(tokens(&[8, 16, 32, 64, 128]), &["64", "128"])),
    ]
}

fn unique_dimensions() -> Vec<Dimension> {
    vec![
        Dimension::new("model_family", tokens(ModelFamily::ALL)),
        Dimension::new("micro", tokens(ConvKind::ALL)),
        Dimension::new("macro", tokens(MacroKind::ALL)),
    ]
}

/// Every choice of the twelve common and three unique dimensions.
pub fn full_space() -> DesignSpace {
    let mut dimensions = common_dimensions(false);
    dimensions.extend(unique_dimensions());
    DesignSpace {
        name: "full".into(),
        dimensions,
    }
}

/// Common dimensions restricted to the condensed choices; unique
/// dimensions unchanged.
pub fn condensed_space() -> DesignSpace {
    let mut dimensions = common_dimensions(true);
    dimensions.extend(unique_dimensions());
    DesignSpace {
        name: "condensed".into(),
        dimensions,
    }
}

impl DesignSpace {
    pub fn new(name: &str, dimensions: Vec<Dimension>) -> Result<Self> {
        let mut errors = Vec::new();
        for (i, d) in dimensions.iter().enumerate() {
            if d.choices.is_empty() {
                errors.push(format!("dimension `{}` has no choices", d.name));
            }
            if dimensions[..i].iter().any(|e| e.name == d.name) {
                errors.push(format!("dimension `{}` appears twice", d.name));
            }
            if !crate::model::DIMENSIONS.contains(&d.name.as_str()) {
                errors.push(format!("unknown dimension `{}`", d.name));
            }
        }
        if errors.is_empty() {
            Ok(DesignSpace {
                name: name.into(),
                dimensions,
            })
        } else {
            Err(Error::Config(errors))
        }
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// A copy with dimension `name` fixed to the single choice `token`.
    pub fn restricted(&self, name: &str, token: &str) -> Result<Self> {
        let mut out = self.clone();
        let dim = out
            .dimensions
            .iter_mut()
            .find(|d| d.name == name)
            .ok_or_else(|| Error::Config(vec![format!("space `{}` has no dimension `{name}`", self.name)]))?;
        if dim.position(token).is_none() {
            return Err(Error::Config(vec![format!("{name}: `{token}` is not a choice in space `{}`", self.name)]));
        }
        dim.choices = vec![token.to_string()];
        Ok(out)
    }

    /// Families the space ranges over; a space without a family dimension
    /// inherits the family of the base config it is applied to.
    fn families(&self, base: &DesignConfig) -> Vec<ModelFamily> {
        match self.dimension("model_family") {
            Some(d) => d.choices.iter().filter_map(|c| c.parse().ok()).collect(),
            None => vec![base.model_family],
        }
    }

    fn block_size(&self, family: ModelFamily) -> u128 {
        self.dimensions
            .iter()
            .filter(|d| d.name != "model_family" && d.applies(family))
            .map(|d| d.choices.len() as u128)
            .product()
    }

    /// Exact number of valid points, applying each dimension only where it
    /// applies. A space without a family dimension is counted under
    /// `base`'s family.
    pub fn cardinality_with(&self, base: &DesignConfig) -> u128 {
        self.families(base).into_iter().map(|f| self.block_size(f)).sum()
    }

    /// The point with index `k < cardinality`, written over a copy of `base`.
    pub fn point(&self, base: &DesignConfig, mut k: u128) -> Result<DesignConfig> {
        for family in self.families(base) {
            let size = self.block_size(family);
            if k >= size {
                k -= size;
                continue;
            }
            let mut cfg = base.clone();
            if self.dimension("model_family").is_some() {
                cfg.set("model_family", family.as_str())?;
            }
            if family.is_dual() && cfg.macro_agg.is_none() {
                cfg.macro_agg = Some(MacroKind::ALL[0]);
            }
            // last dimension varies fastest
            for d in self.dimensions.iter().rev() {
                if d.name == "model_family" || !d.applies(family) {
                    continue;
                }
                let n = d.choices.len() as u128;
                cfg.set(&d.name, &d.choices[(k % n) as usize])?;
                k /= n;
            }
            return Ok(cfg);
        }
        Err(Error::Config(vec![format!("point index beyond space `{}`", self.name)]))
    }

    /// Every point in index order.
    pub fn enumerate<'a>(&'a self, base: &'a DesignConfig) -> impl Iterator<Item = DesignConfig> + 'a {
        (0..self.cardinality_with(base)).map(move |k| self.point(base, k).expect("index within cardinality"))
    }

    /// Choice-membership and applicability errors of `cfg` in this space.
    pub fn membership_errors(&self, cfg: &DesignConfig) -> Vec<String> {
        let mut errors = Vec::new();
        for d in &self.dimensions {
            let value = cfg.get(&d.name).expect("space dimensions are known");
            match (value, d.applies(cfg.model_family)) {
                (Some(v), true) if d.position(&v).is_none() => errors.push(format!(
                    "{}: `{v}` is not a choice in space `{}` (expected one of {})",
                    d.name,
                    self.name,
                    d.choices.join(", ")
                )),
                (Some(_), false) => errors.push(format!(
                    "{}: not applicable to the {} family",
                    d.name, cfg.model_family
                )),
                _ => {}
            }
        }
        errors
    }
}

/// Exact point count of `space` under its own family dimension.
pub fn cardinality(space: &DesignSpace) -> u128 {
    let base = DesignConfig::rgcn(crate::train::Task::link_prediction("_"));
    space.cardinality_with(&base)
}

/// Problems that make a config unbuildable for `schema` regardless of the
/// space it came from.
pub fn structural_errors(cfg: &DesignConfig, schema: &Schema) -> Vec<String> {
    let mut errors = Vec::new();
    match (cfg.model_family.is_dual(), cfg.macro_agg) {
        (false, Some(m)) => errors.push(format!("macro: `{m}` given but the {} family has no macro aggregation", cfg.model_family)),
        (true, None) => errors.push(format!("macro: the {} family needs a macro aggregation", cfg.model_family)),
        _ => {}
    }
    if cfg.model_family == ModelFamily::Metapath {
        if cfg.metapaths.is_empty() {
            errors.push("metapaths: the Metapath family needs at least one meta-path".into());
        }
        for (i, mp) in cfg.metapaths.iter().enumerate() {
            if let Err(e) = mp.endpoints(schema) {
                errors.push(format!("metapaths[{i}]: {e}"));
            }
            if cfg.metapaths[..i].iter().any(|o| o.name == mp.name) {
                errors.push(format!("metapaths[{i}]: duplicate name `{}`", mp.name));
            }
        }
    }
    if let Err(e) = cfg.task.check(schema) {
        errors.push(format!("task: {e}"));
    }
    for (name, v) in [
        ("pre_layers", cfg.pre_layers),
        ("mp_layers", cfg.mp_layers),
        ("post_layers", cfg.post_layers),
        ("hidden", cfg.hidden),
    ] {
        if v == 0 {
            errors.push(format!("{name}: must be at least 1"));
        }
    }
    if !(0.0..1.0).contains(&cfg.dropout) {
        errors.push(format!("dropout: {} outside [0, 1)", cfg.dropout));
    }
    if !(cfg.lr.is_finite() && cfg.lr > 0.0) {
        errors.push(format!("lr: {} is not a positive step size", cfg.lr));
    }
    errors
}

/// Checks `cfg` against `space` and `schema`, reporting every violation.
pub fn validate(cfg: &DesignConfig, space: &DesignSpace, schema: &Schema) -> Result<()> {
    let mut errors = space.membership_errors(cfg);
    for e in structural_errors(cfg, schema) {
        if !errors.contains(&e) && !(e.starts_with("macro:") && errors.iter().any(|x| x.starts_with("macro:"))) {
            errors.push(e);
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(errors))
    }
}

/// A (model family, micro convolution) cell that must receive at least
/// `hits` samples.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub family: ModelFamily,
    pub micro: ConvKind,
    pub hits: usize,
}

/// Every family × micro cell of `space` with `hits` required samples.
pub fn all_strata(space: &DesignSpace, hits: usize) -> Result<Vec<Stratum>> {
    let fam = space
        .dimension("model_family")
        .ok_or_else(|| Error::Config(vec!["strata need a model_family dimension".into()]))?;
    let micro = space
        .dimension("micro")
        .ok_or_else(|| Error::Config(vec!["strata need a micro dimension".into()]))?;
    let mut out = Vec::new();
    for f in &fam.choices {
        for m in &micro.choices {
            out.push(Stratum {
                family: f.parse()?,
                micro: m.parse()?,
                hits,
            });
        }
    }
    Ok(out)
}

/// Seed of item `k` under a master seed; items are reproducible in
/// isolation.
pub fn derive_seed(master: u64, k: u64) -> u64 {
    splitmix64(master ^ splitmix64(k))
}

fn uniform_point(space: &DesignSpace, base: &DesignConfig, rng: &mut ChaCha8Rng) -> Result<DesignConfig> {
    let n = space.cardinality_with(base);
    if n == 0 {
        return Err(Error::Config(vec![format!("space `{}` is empty", space.name)]));
    }
    let hi = rng.random::<u64>() as u128;
    let lo = rng.random::<u64>() as u128;
    // 128 random bits against a count below 2^64 leaves a negligible bias
    let k = ((hi << 64) | lo) % n;
    space.point(base, k)
}

/// Controlled random search: every stratum first receives its hits, each
/// drawn uniformly within its cell; the remaining samples are uniform over
/// the whole space. The result is shuffled and sample `i` gets seed
/// `derive_seed(seed, i)`. Deterministic in `seed`.
pub fn sample_controlled(
    space: &DesignSpace,
    base: &DesignConfig,
    n: usize,
    strata: &[Stratum],
    seed: u64,
) -> Result<Vec<DesignConfig>> {
    let required: usize = strata.iter().map(|s| s.hits).sum();
    if required > n {
        return Err(Error::Infeasible { required, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for s in strata {
        let cell = space
            .restricted("model_family", s.family.as_str())?
            .restricted("micro", s.micro.as_str())?;
        for _ in 0..s.hits {
            out.push(uniform_point(&cell, base, &mut rng)?);
        }
    }
    while out.len() < n {
        out.push(uniform_point(space, base, &mut rng)?);
    }
    out.shuffle(&mut rng);
    for (i, cfg) in out.iter_mut().enumerate() {
        cfg.seed = derive_seed(seed, i as u64);
    }
    Ok(out)
}

/// One ranking setup: `base` with dimension `dim` set to each of its
/// choices in turn (the base's own value included).
pub fn perturb_dimension(space: &DesignSpace, base: &DesignConfig, dim: &str) -> Result<Vec<DesignConfig>> {
    let d = space.dimension(dim).ok_or_else(|| Error::Inapplicable {
        dim: dim.to_string(),
        reason: format!("not a dimension of space `{}`", space.name),
    })?;
    if !d.applies(base.model_family) {
        return Err(Error::Inapplicable {
            dim: dim.to_string(),
            reason: format!("the {} family has no macro aggregation", base.model_family),
        });
    }
    let default_macro = space
        .dimension("macro")
        .and_then(|m| m.choices.first())
        .and_then(|c| c.parse().ok())
        .unwrap_or(MacroKind::ALL[0]);
    d.choices
        .iter()
        .map(|c| {
            let mut cfg = base.clone();
            cfg.set(dim, c)?;
            if cfg.model_family.is_dual() && cfg.macro_agg.is_none() {
                cfg.macro_agg = Some(default_macro);
            }
            Ok(cfg)
        })
        .collect()
}
