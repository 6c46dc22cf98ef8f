use super::{fmt_f64, parse_key_values, ProtocolError};

pub const GRADING_BINS: usize = 12;
pub const MIX_DIM: usize = 18;

/// Positions of the material entries (everything except time since water
/// addition, paddle velocity and frame rate) within the mix vector. These are
/// what the "without m" ablations drop.
pub const MATERIAL_INDICES: [usize; 15] = [0, 1, 2, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15];

// Scale factors mapping physical units into [0, 2].
const WC_SCALE: f64 = 2.0;
const PASTE_SCALE: f64 = 4.0;
const ADMIXTURE_SCALE: f64 = 1.0;
const TIME_SCALE: f64 = 1.0 / 100.0;
const VELOCITY_SCALE: f64 = 2.0;
const FPS_SCALE: f64 = 1.0 / 50.0;

/// The recipe part of a mix design, as stored in `mix.txt`.
#[derive(Clone, Debug, PartialEq)]
pub struct Materials {
    pub water_cement_ratio: f64,
    /// Paste volume fraction.
    pub paste_content: f64,
    /// Admixture dosage in % of cement mass.
    pub admixture_content: f64,
    /// Cumulative passing fractions, nondecreasing, in [0, 1].
    pub grading_curve: [f64; GRADING_BINS],
}

impl Materials {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        let g = &self.grading_curve;
        if g.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(ProtocolError::Invalid(format!("grading curve outside [0,1]: {g:?}")));
        }
        if g.windows(2).any(|w| w[1] < w[0]) {
            return Err(ProtocolError::Invalid(format!("grading curve decreases: {g:?}")));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "water_cement_ratio={}\npaste_content={}\nadmixture_content={}\n",
            fmt_f64(self.water_cement_ratio),
            fmt_f64(self.paste_content),
            fmt_f64(self.admixture_content)
        );
        for (i, v) in self.grading_curve.iter().enumerate() {
            s.push_str(&format!("grading_{i}={}\n", fmt_f64(*v)));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ProtocolError> {
        let kv = parse_key_values(text, "mix.txt")?;
        let mut wc = None;
        let mut paste = None;
        let mut adm = None;
        let mut grading = [None; GRADING_BINS];
        for (k, v) in &kv {
            let val: f64 = v
                .parse()
                .map_err(|_| ProtocolError::Invalid(format!("mix.txt: {k}={v} is not a number")))?;
            let slot = match k.as_str() {
                "water_cement_ratio" => &mut wc,
                "paste_content" => &mut paste,
                "admixture_content" => &mut adm,
                _ => match k.strip_prefix("grading_").and_then(|i| i.parse::<usize>().ok()) {
                    Some(i) if i < GRADING_BINS => &mut grading[i],
                    _ => return Err(ProtocolError::Invalid(format!("mix.txt: unknown key {k}"))),
                },
            };
            *slot = Some(val);
        }
        let need = |v: Option<f64>, k: &str| {
            v.ok_or_else(|| ProtocolError::Invalid(format!("mix.txt: missing key {k}")))
        };
        let mut grading_curve = [0.0; GRADING_BINS];
        for (i, g) in grading.iter().enumerate() {
            grading_curve[i] = need(*g, &format!("grading_{i}"))?;
        }
        let m = Self {
            water_cement_ratio: need(wc, "water_cement_ratio")?,
            paste_content: need(paste, "paste_content")?,
            admixture_content: need(adm, "admixture_content")?,
            grading_curve,
        };
        m.validate()?;
        Ok(m)
    }
}

/// Full 18-entry mix description of one run: the concrete's materials plus
/// the run's acquisition conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct MixDesign {
    pub materials: Materials,
    pub time_since_water_addition_min: f64,
    pub paddle_velocity_mps: f64,
    pub frame_rate_fps: f64,
}

impl MixDesign {
    /// Scaled vector `[w/c, paste, admixture, time, grading×12, velocity,
    /// frame rate]`, every entry in [0, 2].
    pub fn to_vector(&self) -> Result<[f64; MIX_DIM], ProtocolError> {
        self.materials.validate()?;
        let m = &self.materials;
        let mut v = [0.0; MIX_DIM];
        v[0] = m.water_cement_ratio * WC_SCALE;
        v[1] = m.paste_content * PASTE_SCALE;
        v[2] = m.admixture_content * ADMIXTURE_SCALE;
        v[3] = self.time_since_water_addition_min * TIME_SCALE;
        v[4..4 + GRADING_BINS].copy_from_slice(&m.grading_curve);
        v[16] = self.paddle_velocity_mps * VELOCITY_SCALE;
        v[17] = self.frame_rate_fps * FPS_SCALE;
        const NAMES: [&str; 4] = ["water_cement_ratio", "paste_content", "admixture_content", "time"];
        for (i, x) in v.iter().enumerate() {
            if !(0.0..=2.0).contains(x) {
                let name = match i {
                    0..=3 => NAMES[i],
                    16 => "paddle_velocity",
                    17 => "frame_rate",
                    _ => "grading_curve",
                };
                return Err(ProtocolError::Invalid(format!(
                    "scaled {name} = {x} lies outside [0,2]"
                )));
            }
        }
        Ok(v)
    }

    /// The vector fed to the network: all 18 entries, or only the
    /// non-material ones when `include_materials` is false.
    pub fn model_vector(&self, include_materials: bool) -> Result<Vec<f64>, ProtocolError> {
        let v = self.to_vector()?;
        Ok(if include_materials {
            v.to_vec()
        } else {
            (0..MIX_DIM)
                .filter(|i| !MATERIAL_INDICES.contains(i))
                .map(|i| v[i])
                .collect()
        })
    }
}
