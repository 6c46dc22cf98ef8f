//! Cross-validation split.
//!
//! Concretes are sorted by their first slump flow diameter δ₁ (descending,
//! ties by id) and cut into contiguous groups. Each group is spread evenly
//! over the test sets, with the recycled-aggregate concretes placed first so
//! that every set receives the same number of them (±1 when the count does
//! not divide). Per fold, the validation set is drawn from the concretes
//! outside the test set: one recycled concrete if any is left, at least one
//! from each group as far as the size allows, the rest at random.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ProtocolError;

#[derive(Clone, Debug, PartialEq)]
pub struct FoldConcrete {
    pub id: usize,
    /// First slump flow diameter in cm.
    pub delta1: f64,
    pub recycled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FoldSpec {
    pub n_concretes: usize,
    pub n_recycled: usize,
    pub n_folds: usize,
    pub val_size: usize,
    pub groups: usize,
}

impl FoldSpec {
    /// 45 concretes, 5 recycled, 5 folds of 9, validation 5, three δ₁ groups.
    pub fn paper() -> Self {
        Self {
            n_concretes: 45,
            n_recycled: 5,
            n_folds: 5,
            val_size: 5,
            groups: 3,
        }
    }

    /// Same proportions for a smaller campaign: validation takes one ninth of
    /// the concretes (rounded up).
    pub fn scaled(n_concretes: usize, n_recycled: usize) -> Self {
        Self {
            n_concretes,
            n_recycled,
            n_folds: 5,
            val_size: n_concretes.div_ceil(9),
            groups: 3,
        }
    }

    fn validate(&self) -> Result<(), ProtocolError> {
        let fail = |m: String| Err(ProtocolError::Folds(m));
        if self.n_folds < 2 || self.n_folds > self.n_concretes {
            return fail(format!(
                "need 2 ≤ folds ≤ concretes, got {} folds for {} concretes",
                self.n_folds, self.n_concretes
            ));
        }
        if self.groups == 0 || self.groups > self.n_concretes {
            return fail(format!("invalid group count {}", self.groups));
        }
        if self.n_recycled > self.n_concretes {
            return fail("more recycled concretes than concretes".into());
        }
        let max_test = self.n_concretes.div_ceil(self.n_folds);
        if self.val_size == 0 || self.val_size + max_test >= self.n_concretes {
            return fail(format!(
                "validation size {} leaves no training concretes",
                self.val_size
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldPlan {
    pub spec: FoldSpec,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

fn group_sizes(n: usize, groups: usize) -> Vec<usize> {
    (0..groups)
        .map(|g| n / groups + usize::from(g < n % groups))
        .collect()
}

pub fn make_folds(
    concretes: &[FoldConcrete],
    spec: &FoldSpec,
    seed: u64,
) -> Result<FoldPlan, ProtocolError> {
    spec.validate()?;
    if concretes.len() != spec.n_concretes {
        return Err(ProtocolError::Folds(format!(
            "expected {} concretes, got {}",
            spec.n_concretes,
            concretes.len()
        )));
    }
    let recycled = concretes.iter().filter(|c| c.recycled).count();
    if recycled != spec.n_recycled {
        return Err(ProtocolError::Folds(format!(
            "expected {} recycled concretes, got {recycled}",
            spec.n_recycled
        )));
    }
    let mut ids: Vec<usize> = concretes.iter().map(|c| c.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(ProtocolError::Folds("duplicate concrete ids".into()));
    }
    if let Some(c) = concretes.iter().find(|c| !c.delta1.is_finite()) {
        return Err(ProtocolError::Folds(format!("concrete {} has no finite δ₁", c.id)));
    }

    let mut sorted: Vec<&FoldConcrete> = concretes.iter().collect();
    sorted.sort_by_key(|c| c.id);
    sorted.sort_by(|a, b| b.delta1.total_cmp(&a.delta1));
    let mut group_of = vec![0usize; concretes.len()];
    let mut grouped: Vec<Vec<&FoldConcrete>> = Vec::with_capacity(spec.groups);
    let mut start = 0;
    for size in group_sizes(sorted.len(), spec.groups) {
        grouped.push(sorted[start..start + size].to_vec());
        start += size;
    }
    let index_of = |id: usize| concretes.iter().position(|c| c.id == id).unwrap();
    for (g, members) in grouped.iter().enumerate() {
        for c in members {
            group_of[index_of(c.id)] = g;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = spec.n_folds;
    let recycled_cap = spec.n_recycled.div_ceil(f);
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); f];
    let mut recycled_in = vec![0usize; f];
    // Rotating start for remainders so set sizes stay within one of each other.
    let mut pointer = 0;
    for members in &grouped {
        let mut quota = vec![members.len() / f; f];
        for k in 0..members.len() % f {
            quota[(pointer + k) % f] += 1;
        }
        pointer = (pointer + members.len() % f) % f;

        let mut rec: Vec<&FoldConcrete> = members.iter().copied().filter(|c| c.recycled).collect();
        let mut rest: Vec<&FoldConcrete> = members.iter().copied().filter(|c| !c.recycled).collect();
        rec.shuffle(&mut rng);
        rest.shuffle(&mut rng);
        for c in rec {
            let fewest = (0..f)
                .filter(|&k| quota[k] > 0 && recycled_in[k] < recycled_cap)
                .map(|k| recycled_in[k])
                .min()
                .ok_or_else(|| {
                    ProtocolError::Folds(format!("no set can take recycled concrete {}", c.id))
                })?;
            let candidates: Vec<usize> = (0..f)
                .filter(|&k| quota[k] > 0 && recycled_in[k] == fewest)
                .collect();
            let k = *candidates.choose(&mut rng).unwrap();
            sets[k].push(c.id);
            quota[k] -= 1;
            recycled_in[k] += 1;
        }
        let mut slots: Vec<usize> = (0..f).flat_map(|k| std::iter::repeat_n(k, quota[k])).collect();
        slots.shuffle(&mut rng);
        for (c, k) in rest.into_iter().zip(slots) {
            sets[k].push(c.id);
        }
    }

    let info = |id: usize| &concretes[index_of(id)];
    let mut folds = Vec::with_capacity(f);
    for test in &sets {
        let mut pool: Vec<usize> = ids.iter().copied().filter(|id| !test.contains(id)).collect();
        let mut val = Vec::with_capacity(spec.val_size);
        let take = |pool: &mut Vec<usize>, val: &mut Vec<usize>, id: usize| {
            pool.retain(|&p| p != id);
            val.push(id);
        };
        let rec_pool: Vec<usize> = pool.iter().copied().filter(|&id| info(id).recycled).collect();
        if let Some(&id) = rec_pool.choose(&mut rng) {
            take(&mut pool, &mut val, id);
        }
        for g in 0..spec.groups {
            if val.len() >= spec.val_size {
                break;
            }
            if val.iter().any(|&id| group_of[index_of(id)] == g) {
                continue;
            }
            let cands: Vec<usize> = pool
                .iter()
                .copied()
                .filter(|&id| !info(id).recycled && group_of[index_of(id)] == g)
                .collect();
            if let Some(&id) = cands.choose(&mut rng) {
                take(&mut pool, &mut val, id);
            }
        }
        while val.len() < spec.val_size {
            let cands: Vec<usize> = pool.iter().copied().filter(|&id| !info(id).recycled).collect();
            let &id = cands.choose(&mut rng).ok_or_else(|| {
                ProtocolError::Folds("not enough non-recycled concretes for validation".into())
            })?;
            take(&mut pool, &mut val, id);
        }
        let mut test = test.clone();
        test.sort_unstable();
        val.sort_unstable();
        folds.push(Fold {
            train: pool,
            val,
            test,
        });
    }
    let plan = FoldPlan {
        spec: *spec,
        seed,
        folds,
    };
    plan.check(concretes)?;
    Ok(plan)
}

impl FoldPlan {
    /// Verifies every structural constraint of the plan against the concrete
    /// list.
    pub fn check(&self, concretes: &[FoldConcrete]) -> Result<(), ProtocolError> {
        let fail = |m: String| Err(ProtocolError::Folds(m));
        let spec = &self.spec;
        if self.folds.len() != spec.n_folds {
            return fail(format!("{} folds, expected {}", self.folds.len(), spec.n_folds));
        }
        let recycled = |id: usize| concretes.iter().any(|c| c.id == id && c.recycled);
        let mut seen: Vec<usize> = self.folds.iter().flat_map(|f| f.test.iter().copied()).collect();
        seen.sort_unstable();
        let mut all: Vec<usize> = concretes.iter().map(|c| c.id).collect();
        all.sort_unstable();
        if seen != all {
            return fail("test sets do not partition the concretes".into());
        }
        let lo = spec.n_concretes / spec.n_folds;
        let rlo = spec.n_recycled / spec.n_folds;
        for (k, fold) in self.folds.iter().enumerate() {
            let n = fold.test.len();
            if n < lo || n > lo + usize::from(spec.n_concretes % spec.n_folds != 0) {
                return fail(format!("fold {k}: test set has {n} concretes"));
            }
            let r = fold.test.iter().filter(|&&id| recycled(id)).count();
            if r < rlo || r > spec.n_recycled.div_ceil(spec.n_folds) {
                return fail(format!("fold {k}: test set has {r} recycled concretes"));
            }
            if fold.val.len() != spec.val_size {
                return fail(format!("fold {k}: validation set has {} concretes", fold.val.len()));
            }
            let rv = fold.val.iter().filter(|&&id| recycled(id)).count();
            let available = spec.n_recycled - r;
            if rv != usize::from(available > 0) {
                return fail(format!("fold {k}: validation set has {rv} recycled concretes"));
            }
            let mut union: Vec<usize> = fold
                .train
                .iter()
                .chain(&fold.val)
                .chain(&fold.test)
                .copied()
                .collect();
            union.sort_unstable();
            if union != all {
                return fail(format!("fold {k}: train/val/test overlap or miss concretes"));
            }
        }
        Ok(())
    }

    /// Plain-text form, one line per fold and role.
    pub fn to_text(&self) -> String {
        let s = &self.spec;
        let mut out = format!(
            "seed={}\nconcretes={}\nrecycled={}\nfolds={}\nval_size={}\ngroups={}\n",
            self.seed, s.n_concretes, s.n_recycled, s.n_folds, s.val_size, s.groups
        );
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
        for (k, f) in self.folds.iter().enumerate() {
            out.push_str(&format!("fold{k}.test={}\n", join(&f.test)));
            out.push_str(&format!("fold{k}.val={}\n", join(&f.val)));
            out.push_str(&format!("fold{k}.train={}\n", join(&f.train)));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let kv = super::parse_key_values(text, "fold plan")?;
        let get = |k: &str| {
            kv.iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| ProtocolError::Invalid(format!("fold plan: missing {k}")))
        };
        let num = |k: &str| -> Result<u64, ProtocolError> {
            get(k)?
                .parse()
                .map_err(|_| ProtocolError::Invalid(format!("fold plan: {k} is not an integer")))
        };
        let spec = FoldSpec {
            n_concretes: num("concretes")? as usize,
            n_recycled: num("recycled")? as usize,
            n_folds: num("folds")? as usize,
            val_size: num("val_size")? as usize,
            groups: num("groups")? as usize,
        };
        let list = |k: &str| -> Result<Vec<usize>, ProtocolError> {
            get(k)?
                .split_whitespace()
                .map(|t| {
                    t.parse()
                        .map_err(|_| ProtocolError::Invalid(format!("fold plan: bad id {t:?} in {k}")))
                })
                .collect()
        };
        let mut folds = Vec::with_capacity(spec.n_folds);
        for k in 0..spec.n_folds {
            folds.push(Fold {
                test: list(&format!("fold{k}.test"))?,
                val: list(&format!("fold{k}.val"))?,
                train: list(&format!("fold{k}.train"))?,
            });
        }
        Ok(Self {
            spec,
            seed: num("seed")?,
            folds,
        })
    }

    /// SHA-256 of [`FoldPlan::to_text`], hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }
}
