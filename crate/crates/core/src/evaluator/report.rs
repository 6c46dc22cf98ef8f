use std::fmt::Write as _;

use super::{Averaged, EvalError, MetricReport, SweepCurve};

/// Precision of the slump test, drawn as error bars on sweep plots.
pub const SLUMP_PRECISION_CM: f64 = 2.46;

const OUTPUTS: [&str; 3] = ["delta", "tau0", "mu"];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub combination: String,
    pub fold: usize,
    pub repeat: usize,
    pub output: String,
    pub eps_rel: f64,
    pub eps_abs: f64,
}

impl MetricRow {
    pub fn from_report(combination: &str, fold: usize, repeat: usize, m: &MetricReport) -> Vec<Self> {
        (0..3)
            .map(|k| Self {
                combination: combination.to_string(),
                fold,
                repeat,
                output: OUTPUTS[k].to_string(),
                eps_rel: m.eps_rel[k],
                eps_abs: m.eps_abs[k],
            })
            .collect()
    }
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from("combination,fold,repeat,output,eps_rel,eps_abs\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6}",
            r.combination, r.fold, r.repeat, r.output, r.eps_rel, r.eps_abs
        );
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>, EvalError> {
    let mut lines = text.lines();
    if lines.next() != Some("combination,fold,repeat,output,eps_rel,eps_abs") {
        return Err(EvalError::Invalid("metrics.csv: unexpected header".into()));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let bad = || EvalError::Invalid(format!("metrics.csv line {}: {l:?}", i + 2));
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(MetricRow {
                combination: f[0].to_string(),
                fold: f[1].parse().map_err(|_| bad())?,
                repeat: f[2].parse().map_err(|_| bad())?,
                output: f[3].to_string(),
                eps_rel: f[4].parse().map_err(|_| bad())?,
                eps_abs: f[5].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AveragingRow {
    pub grouping: String,
    pub group_size_mean: f64,
    pub output: String,
    pub eps_rel: f64,
    pub eps_abs: f64,
}

impl AveragingRow {
    pub fn from_averaged(avg: &Averaged, m: &MetricReport) -> Vec<Self> {
        (0..3)
            .map(|k| Self {
                grouping: avg.grouping.to_string(),
                group_size_mean: avg.mean_group_size[k],
                output: OUTPUTS[k].to_string(),
                eps_rel: m.eps_rel[k],
                eps_abs: m.eps_abs[k],
            })
            .collect()
    }
}

pub fn averaging_csv(rows: &[AveragingRow]) -> String {
    let mut s = String::from("grouping,group_size_mean,output,eps_rel,eps_abs\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.3},{},{:.6},{:.6}",
            r.grouping, r.group_size_mean, r.output, r.eps_rel, r.eps_abs
        );
    }
    s
}

pub fn sweep_csv(curve: &SweepCurve) -> String {
    let mut s = String::from("minute,delta_pred,tau0_pred,mu_pred,n_averaged\n");
    for (t, p) in curve.minutes.iter().zip(&curve.predictions) {
        let _ = writeln!(s, "{t},{:.6},{:.6},{:.6},{}", p[0], p[1], p[2], curve.n_averaged);
    }
    s
}

/// `series,x,y,err` rows: the predicted δ curve (err 0) followed by the
/// slump references `(minute, δ)` with the slump-test precision as error.
pub fn plot_data(curve: &SweepCurve, references: &[(f64, f64)]) -> String {
    let mut s = String::from("series,x,y,err\n");
    for (t, p) in curve.minutes.iter().zip(&curve.predictions) {
        let _ = writeln!(s, "prediction,{t},{:.6},0", p[0]);
    }
    for (t, d) in references {
        let _ = writeln!(s, "reference,{t:.6},{d:.6},{SLUMP_PRECISION_CM}");
    }
    s
}

/// Minimal vector plot of the δ sweep with reference points and error bars.
pub fn sweep_svg(curve: &SweepCurve, references: &[(f64, f64)]) -> String {
    let (w, h, pad) = (640.0, 360.0, 40.0);
    let xs = curve.minutes.iter().copied().chain(references.iter().map(|r| r.0));
    let (x0, x1) = xs.fold((f64::MAX, f64::MIN), |(a, b), x| (a.min(x), b.max(x)));
    let ys = curve
        .predictions
        .iter()
        .map(|p| p[0])
        .chain(references.iter().flat_map(|r| [r.1 - SLUMP_PRECISION_CM, r.1 + SLUMP_PRECISION_CM]));
    let (y0, y1) = ys.fold((f64::MAX, f64::MIN), |(a, b), y| (a.min(y), b.max(y)));
    let (xr, yr) = ((x1 - x0).max(1e-9), (y1 - y0).max(1e-9));
    let px = |x: f64| pad + (x - x0) / xr * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / yr * (h - 2.0 * pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    let _ = writeln!(
        s,
        "<rect x=\"{pad}\" y=\"{pad}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#888\"/>",
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let pts: Vec<String> = curve
        .minutes
        .iter()
        .zip(&curve.predictions)
        .map(|(t, p)| format!("{:.2},{:.2}", px(*t), py(p[0])))
        .collect();
    let _ = writeln!(s, "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\" points=\"{}\"/>", pts.join(" "));
    for (t, d) in references {
        let (x, y) = (px(*t), py(*d));
        let (ylo, yhi) = (py(d - SLUMP_PRECISION_CM), py(d + SLUMP_PRECISION_CM));
        let _ = writeln!(s, "<line x1=\"{x:.2}\" y1=\"{ylo:.2}\" x2=\"{x:.2}\" y2=\"{yhi:.2}\" stroke=\"#c33\"/>");
        let _ = writeln!(s, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#c33\"/>");
    }
    let _ = writeln!(
        s,
        "<text x=\"{pad}\" y=\"{}\" font-size=\"12\">t [min] {x0:.0}..{x1:.0}, delta [cm] {y0:.1}..{y1:.1}</text>",
        h - 10.0
    );
    s.push_str("</svg>\n");
    s
}
