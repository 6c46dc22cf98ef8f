use super::{fmt_f64, ProtocolError};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Reading {
    /// Slump flow diameter δ in cm.
    Slump { delta_cm: f64 },
    /// Yield stress τ₀ in Pa and plastic viscosity μ in Pa·s.
    Rheometer { tau0_pa: f64, mu_pas: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceMeasurement {
    /// Minutes since water addition.
    pub timestamp_min: f64,
    pub reading: Reading,
    pub plausible: bool,
}

impl ReferenceMeasurement {
    pub fn is_slump(&self) -> bool {
        matches!(self.reading, Reading::Slump { .. })
    }
}

/// One slump measurement paired with one rheometer measurement.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceCombination {
    /// Position in the enumeration order (slump-major).
    pub index: usize,
    pub slump_timestamp_min: f64,
    pub rheo_timestamp_min: f64,
    /// `(δ, τ₀, μ)` in original units.
    pub targets: [f64; 3],
    /// `(true, plausible, plausible)` of the rheometer measurement.
    pub mask: [bool; 3],
}

/// `(slump_ts − image_ts, rheo_ts − image_ts)` in minutes.
pub fn compute_delta_t(image_ts_min: f64, combo: &ReferenceCombination) -> [f64; 2] {
    [
        combo.slump_timestamp_min - image_ts_min,
        combo.rheo_timestamp_min - image_ts_min,
    ]
}

/// Cartesian product of slump × rheometer measurements, slump-major, each
/// group in file order.
pub fn enumerate_combinations(
    refs: &[ReferenceMeasurement],
) -> Result<Vec<ReferenceCombination>, ProtocolError> {
    let slumps: Vec<_> = refs.iter().filter(|r| r.is_slump()).collect();
    let rheos: Vec<_> = refs.iter().filter(|r| !r.is_slump()).collect();
    if slumps.is_empty() {
        return Err(ProtocolError::MissingMeasurement("slump"));
    }
    if rheos.is_empty() {
        return Err(ProtocolError::MissingMeasurement("rheometer"));
    }
    let mut out = Vec::with_capacity(slumps.len() * rheos.len());
    for s in &slumps {
        let Reading::Slump { delta_cm } = s.reading else { unreachable!() };
        for r in &rheos {
            let Reading::Rheometer { tau0_pa, mu_pas } = r.reading else { unreachable!() };
            out.push(ReferenceCombination {
                index: out.len(),
                slump_timestamp_min: s.timestamp_min,
                rheo_timestamp_min: r.timestamp_min,
                targets: [delta_cm, tau0_pa, mu_pas],
                mask: [true, r.plausible, r.plausible],
            });
        }
    }
    Ok(out)
}

/// Combination for the `ordinal`-th input set of a run: round robin.
pub fn assign_combination(ordinal: usize, n_combinations: usize) -> usize {
    ordinal % n_combinations
}

pub fn format_references(refs: &[ReferenceMeasurement]) -> String {
    let mut s = String::from("kind,timestamp_min,v1,v2,plausible\n");
    for r in refs {
        let (kind, v1, v2) = match r.reading {
            Reading::Slump { delta_cm } => ("slump", fmt_f64(delta_cm), String::new()),
            Reading::Rheometer { tau0_pa, mu_pas } => ("rheometer", fmt_f64(tau0_pa), fmt_f64(mu_pas)),
        };
        s.push_str(&format!(
            "{kind},{},{v1},{v2},{}\n",
            fmt_f64(r.timestamp_min),
            r.plausible
        ));
    }
    s
}

pub fn parse_references(text: &str) -> Result<Vec<ReferenceMeasurement>, ProtocolError> {
    let mut out = Vec::new();
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "kind,timestamp_min,v1,v2,plausible" => {}
        _ => {
            return Err(ProtocolError::Parse {
                context: "references.csv".into(),
                line: 1,
                message: "missing header kind,timestamp_min,v1,v2,plausible".into(),
            })
        }
    }
    for (i, line) in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ProtocolError::Parse {
            context: "references.csv".into(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, got {}", cols.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("{s:?} is not a number")));
        let timestamp_min = num(cols[1])?;
        let plausible = match cols[4] {
            "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(err(format!("plausible must be true/false, got {other:?}"))),
        };
        let reading = match cols[0] {
            "slump" => {
                if !cols[3].is_empty() {
                    return Err(err("slump rows carry exactly one value".into()));
                }
                Reading::Slump {
                    delta_cm: num(cols[2])?,
                }
            }
            "rheometer" => Reading::Rheometer {
                tau0_pa: num(cols[2])?,
                mu_pas: num(cols[3])?,
            },
            other => return Err(err(format!("unknown measurement kind {other:?}"))),
        };
        out.push(ReferenceMeasurement {
            timestamp_min,
            reading,
            plausible,
        });
    }
    Ok(out)
}
