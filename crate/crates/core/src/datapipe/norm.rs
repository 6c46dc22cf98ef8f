use std::fmt;

use super::{DataError, InputSet};
use crate::protocol::{fmt_f64, parse_key_values};

/// Quantities normalised with their own training mean and standard
/// deviation. Both optical-flow axes share [`Category::Flow`], both time
/// offsets share [`Category::DeltaT`]; the mix vector is never normalised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    Ortho,
    Depth,
    Flow,
    DeltaT,
    Delta,
    Tau0,
    Mu,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Ortho,
        Category::Depth,
        Category::Flow,
        Category::DeltaT,
        Category::Delta,
        Category::Tau0,
        Category::Mu,
    ];

    pub const TARGETS: [Category; 3] = [Category::Delta, Category::Tau0, Category::Mu];

    fn key(self) -> &'static str {
        match self {
            Category::Ortho => "O",
            Category::Depth => "D",
            Category::Flow => "OF",
            Category::DeltaT => "delta_t",
            Category::Delta => "delta",
            Category::Tau0 => "tau0",
            Category::Mu => "mu",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NormStats {
    entries: [Option<MeanStd>; 7],
}

impl NormStats {
    pub fn get(&self, c: Category) -> Result<MeanStd, DataError> {
        self.entries[c as usize].ok_or(DataError::MissingCategory(c))
    }

    pub fn set(&mut self, c: Category, v: MeanStd) {
        self.entries[c as usize] = Some(v);
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in Category::ALL {
            if let Some(v) = self.entries[c as usize] {
                s.push_str(&format!("norm.{}.mean={}\n", c.key(), fmt_f64(v.mean)));
                s.push_str(&format!("norm.{}.std={}\n", c.key(), fmt_f64(v.std)));
            }
        }
        s
    }

    /// Reads the `norm.*` keys of a key=value text; other keys are ignored.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let kv = parse_key_values(text, "norm stats")?;
        let mut out = Self::default();
        for c in Category::ALL {
            let find = |suffix: &str| {
                let key = format!("norm.{}.{suffix}", c.key());
                kv.iter().find(|(k, _)| *k == key).map(|(_, v)| {
                    v.parse::<f64>()
                        .map_err(|_| DataError::Input(format!("{key}={v} is not a number")))
                })
            };
            match (find("mean"), find("std")) {
                (Some(m), Some(s)) => out.set(c, MeanStd { mean: m?, std: s? }),
                (None, None) => {}
                _ => return Err(DataError::Input(format!("norm stats for {c} are incomplete"))),
            }
        }
        Ok(out)
    }
}

pub fn apply_norm(x: f64, stats: &NormStats, c: Category) -> Result<f64, DataError> {
    let s = stats.get(c)?;
    Ok((x - s.mean) / s.std)
}

pub fn denorm(x: f64, stats: &NormStats, c: Category) -> Result<f64, DataError> {
    let s = stats.get(c)?;
    Ok(x * s.std + s.mean)
}

/// Two-pass mean and population standard deviation; `visit` feeds every
/// value in a fixed order and is called once per pass.
fn mean_std(c: Category, visit: impl Fn(&mut dyn FnMut(f64))) -> Result<Option<MeanStd>, DataError> {
    let (mut n, mut sum) = (0usize, 0.0f64);
    visit(&mut |v| {
        sum += v;
        n += 1;
    });
    if n == 0 {
        return Ok(None);
    }
    let mean = sum / n as f64;
    let mut ss = 0.0f64;
    visit(&mut |v| ss += (v - mean) * (v - mean));
    let std = (ss / n as f64).sqrt();
    if !(std > 0.0) || !std.is_finite() {
        return Err(DataError::ZeroVariance(c));
    }
    Ok(Some(MeanStd { mean, std }))
}

/// Fits statistics on the training split. Image categories are fitted when
/// the sets carry them; targets only over unmasked entries.
pub fn fit_norm_stats(sets: &[InputSet]) -> Result<NormStats, DataError> {
    let mut stats = NormStats::default();
    if sets.is_empty() {
        return Err(DataError::Input("cannot fit normalisation on an empty split".into()));
    }
    let comb = sets[0].combination;
    if sets.iter().any(|s| s.combination != comb) {
        return Err(DataError::Input("sets mix different input combinations".into()));
    }
    let cats = comb.channel_categories();
    for c in [Category::Ortho, Category::Depth, Category::Flow] {
        let idx: Vec<usize> = (0..cats.len()).filter(|&i| cats[i] == c).collect();
        let fitted = mean_std(c, |f| {
            for s in sets {
                for &i in &idx {
                    s.channel(i).iter().for_each(|&v| f(v as f64));
                }
            }
        })?;
        if let Some(v) = fitted {
            stats.set(c, v);
        }
    }
    let fitted = mean_std(Category::DeltaT, |f| {
        sets.iter().flat_map(|s| s.delta_t).for_each(|v| f(v))
    })?;
    if let Some(v) = fitted {
        stats.set(Category::DeltaT, v);
    }
    for (k, c) in Category::TARGETS.into_iter().enumerate() {
        let fitted = mean_std(c, |f| {
            sets.iter()
                .filter(|s| s.target_mask[k])
                .for_each(|s| f(s.targets[k]))
        })?;
        stats.set(c, fitted.ok_or(DataError::ZeroVariance(c))?);
    }
    Ok(stats)
}
