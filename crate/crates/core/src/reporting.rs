//! Reliability-diagram and transport-map exports (SVG, CSV, JSON).
//!
//! JSON carries `"schema": 1` and round-trips every number exactly. CSV
//! uses the shortest representation that parses back to the same value.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{CurvePoint, ReliabilityReport};
use crate::ot::{CalibrationPolicy, CostMatrix, OtConfig, TransportPlan};
use crate::scalar::Scalar;

pub const SCHEMA_VERSION: u32 = 1;

const RED: &str = "#d62728";
const BLUE: &str = "#1f77b4";
const GRAY: &str = "#7f7f7f";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Svg,
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "svg" => Ok(Self::Svg),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::UnsupportedFormat(s.to_string())),
        }
    }
}

impl ExportFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .ok_or_else(|| Error::UnsupportedFormat(path.display().to_string()))?
            .parse()
    }
}

/// Everything drawn in a reliability diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DiagramSpec<T: Scalar> {
    pub report: ReliabilityReport<T>,
    /// Continuous curve, sorted by `s`. Drawn instead of the binned curve.
    pub curve: Option<Vec<CurvePoint<T>>>,
    pub annotations: Vec<String>,
}

impl<T: Scalar> DiagramSpec<T> {
    pub fn new(report: ReliabilityReport<T>, curve: Option<Vec<CurvePoint<T>>>) -> Result<Self> {
        if let Some(points) = &curve {
            if points.windows(2).any(|w| w[0].s > w[1].s) {
                return Err(Error::InvalidConfig("curve points must be sorted by s".into()));
            }
            if points.iter().any(|p| !p.f_hat.is_finite()) {
                return Err(Error::InvalidConfig("curve density must be finite; avoid s = 0 and s = 1".into()));
            }
        }
        let fmt = |name: &str, e: &crate::bootstrap::Estimate<T>| {
            format!(
                "{name} = {:.4} (95% CI {:.4} to {:.4})",
                e.point.as_f64(),
                e.ci.lower.as_f64(),
                e.ci.upper.as_f64()
            )
        };
        let annotations = vec![fmt("ECE", &report.ece), fmt("ECE*", &report.ece_star)];
        Ok(Self {
            report,
            curve,
            annotations,
        })
    }
}

#[derive(Serialize)]
struct VersionedRef<'a, P> {
    schema: u32,
    #[serde(flatten)]
    payload: &'a P,
}

#[derive(Deserialize)]
struct Versioned<P> {
    schema: u32,
    #[serde(flatten)]
    payload: P,
}

fn to_versioned_json<P: Serialize>(payload: &P) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(&VersionedRef {
        schema: SCHEMA_VERSION,
        payload,
    })?;
    out.push(b'\n');
    Ok(out)
}

fn from_versioned_json<P: serde::de::DeserializeOwned>(bytes: &[u8]) -> Result<P> {
    let v: Versioned<P> = serde_json::from_slice(bytes)?;
    if v.schema != SCHEMA_VERSION {
        return Err(Error::UnsupportedFormat(format!("schema version {}", v.schema)));
    }
    Ok(v.payload)
}

fn opt<T: Scalar>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn export_diagram<T: Scalar>(spec: &DiagramSpec<T>, format: ExportFormat) -> Result<Vec<u8>> {
    match format {
        ExportFormat::Json => to_versioned_json(spec),
        ExportFormat::Csv => Ok(diagram_csv(spec).into_bytes()),
        ExportFormat::Svg => Ok(diagram_svg(spec).into_bytes()),
    }
}

/// Reads back a JSON diagram export.
pub fn import_diagram<T: Scalar>(bytes: &[u8]) -> Result<DiagramSpec<T>> {
    from_versioned_json(bytes)
}

/// Columns: `series,index,lo,hi,s,r_hat,g_hat,p_hat,ci_lower,ci_upper,density`.
/// `series` is `bin` for binned rows and `curve` for continuous points.
fn diagram_csv<T: Scalar>(spec: &DiagramSpec<T>) -> String {
    let r = &spec.report;
    let mut out = String::from("series,index,lo,hi,s,r_hat,g_hat,p_hat,ci_lower,ci_upper,density\n");
    let density = r.density();
    for (m, b) in r.bins.iter().enumerate() {
        let (lo, hi) = r.grid.bounds(m);
        let ci = r.r_hat_ci[m];
        let _ = writeln!(
            out,
            "bin,{m},{lo},{hi},{},{},{},{},{},{},{}",
            r.grid.midpoint(m),
            opt(b.r_hat),
            opt(b.g_hat),
            b.p_hat,
            opt(ci.map(|c| c.lower)),
            opt(ci.map(|c| c.upper)),
            density[m]
        );
    }
    for (i, p) in spec.curve.iter().flatten().enumerate() {
        let _ = writeln!(out, "curve,{i},,,{},{},,,,,{}", p.s, opt(p.r_hat), p.f_hat);
    }
    out
}

struct Frame {
    left: f64,
    top: f64,
    size: f64,
}

impl Frame {
    fn x(&self, s: f64) -> f64 {
        self.left + s * self.size
    }

    fn y(&self, r: f64) -> f64 {
        self.top + (1.0 - r) * self.size
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Splits `(index, value)` pairs into runs of consecutive indices.
fn runs<V: Copy>(items: impl Iterator<Item = (usize, Option<V>)>) -> Vec<Vec<V>> {
    let mut out: Vec<Vec<V>> = Vec::new();
    let mut open = false;
    for (_, v) in items {
        match v {
            Some(v) if open => out.last_mut().expect("open run").push(v),
            Some(v) => {
                out.push(vec![v]);
                open = true;
            }
            None => open = false,
        }
    }
    out
}

fn diagram_svg<T: Scalar>(spec: &DiagramSpec<T>) -> String {
    let r = &spec.report;
    let f = Frame {
        left: 60.0,
        top: 50.0,
        size: 400.0,
    };
    let strip = 60.0;
    let height = f.top + f.size + strip + 50.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="520" height="{height}" viewBox="0 0 520 {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="520" height="{height}" fill="white"/>"#);

    for (i, a) in spec.annotations.iter().enumerate() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, f.left, 18.0 + 15.0 * i as f64, escape(a));
    }

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        f.left, f.top, f.size, f.size
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{v:.1}</text>"#,
            f.x(v),
            f.top + f.size + strip + 16.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.1}</text>"#,
            f.left - 6.0,
            f.y(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">confidence</text>"#,
        f.x(0.5),
        height - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">observed frequency</text>"#,
        f.y(0.5),
        f.y(0.5)
    );

    // density strip below the plot
    let density: Vec<f64> = r.density().into_iter().map(Scalar::as_f64).collect();
    let peak = density.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        let base = f.top + f.size + strip;
        for (m, d) in density.iter().enumerate() {
            if *d <= 0.0 {
                continue;
            }
            let (lo, hi) = r.grid.bounds(m);
            let h = (strip - 8.0) * d / peak;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{GRAY}" fill-opacity="0.6"/>"#,
                f.x(lo.as_f64()),
                base - h,
                (hi - lo).as_f64() * f.size,
                h
            );
        }
    }

    // confidence band, one polygon per run of occupied bins
    let band = runs(r.r_hat_ci.iter().enumerate().map(|(m, ci)| {
        let (lo, hi) = r.grid.bounds(m);
        (m, ci.map(|c| (lo.as_f64(), hi.as_f64(), c.lower.as_f64(), c.upper.as_f64())))
    }));
    for run in band {
        let mut pts = Vec::new();
        for &(lo, hi, _, up) in &run {
            pts.push(format!("{:.2},{:.2}", f.x(lo), f.y(up)));
            pts.push(format!("{:.2},{:.2}", f.x(hi), f.y(up)));
        }
        for &(lo, hi, low, _) in run.iter().rev() {
            pts.push(format!("{:.2},{:.2}", f.x(hi), f.y(low)));
            pts.push(format!("{:.2},{:.2}", f.x(lo), f.y(low)));
        }
        let _ = writeln!(
            svg,
            r#"<polygon points="{}" fill="{BLUE}" fill-opacity="0.25" stroke="none"/>"#,
            pts.join(" ")
        );
    }

    let _ = writeln!(
        svg,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="black" stroke-dasharray="4 4"/>"#,
        f.x(0.0),
        f.y(0.0),
        f.x(1.0),
        f.y(1.0)
    );

    let curve = match &spec.curve {
        Some(points) => runs(
            points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.r_hat.map(|v| (p.s.as_f64(), v.as_f64())))),
        ),
        None => runs(
            r.bins
                .iter()
                .enumerate()
                .map(|(m, b)| (m, b.r_hat.map(|v| (r.grid.midpoint(m).as_f64(), v.as_f64())))),
        ),
    };
    for run in curve {
        if run.len() == 1 {
            let (s, v) = run[0];
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{RED}"/>"#, f.x(s), f.y(v));
            continue;
        }
        let pts: Vec<String> = run.iter().map(|&(s, v)| format!("{:.2},{:.2}", f.x(s), f.y(v))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{RED}" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Cost, plan and policy of one calibration run, rows labeled by source
/// phrase and columns by target phrase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransportExport<T: Scalar> {
    pub source_phrases: Vec<String>,
    pub target_phrases: Vec<String>,
    pub cost: Vec<Vec<T>>,
    pub plan: Vec<Vec<T>>,
    pub policy: Vec<Vec<T>>,
    pub extrapolated: Vec<usize>,
    pub config: OtConfig<T>,
    pub converged: bool,
    pub iterations: usize,
    pub objective: T,
    pub baseline_ece: T,
}

impl<T: Scalar> TransportExport<T> {
    pub fn new(cost: &CostMatrix<T>, plan: &TransportPlan<T>, policy: &CalibrationPolicy<T>, config: &OtConfig<T>) -> Self {
        Self {
            source_phrases: policy.source_phrases.clone(),
            target_phrases: policy.target_phrases.clone(),
            cost: cost.values.clone(),
            plan: plan.values.clone(),
            policy: policy.rows.clone(),
            extrapolated: policy.extrapolated.clone(),
            config: *config,
            converged: plan.converged,
            iterations: plan.iterations,
            objective: plan.objective,
            baseline_ece: cost.baseline_ece,
        }
    }
}

pub fn export_transport<T: Scalar>(
    cost: &CostMatrix<T>,
    plan: &TransportPlan<T>,
    policy: &CalibrationPolicy<T>,
    config: &OtConfig<T>,
    format: ExportFormat,
) -> Result<Vec<u8>> {
    let data = TransportExport::new(cost, plan, policy, config);
    match format {
        ExportFormat::Json => to_versioned_json(&data),
        ExportFormat::Csv => Ok(transport_csv(&data).into_bytes()),
        ExportFormat::Svg => Ok(transport_svg(&data).into_bytes()),
    }
}

pub fn import_transport<T: Scalar>(bytes: &[u8]) -> Result<TransportExport<T>> {
    from_versioned_json(bytes)
}

/// Policy as standalone JSON, loadable by [`import_policy`].
pub fn export_policy<T: Scalar>(policy: &CalibrationPolicy<T>) -> Result<Vec<u8>> {
    to_versioned_json(policy)
}

pub fn import_policy<T: Scalar>(bytes: &[u8]) -> Result<CalibrationPolicy<T>> {
    from_versioned_json(bytes)
}

/// Long format: `matrix,source,target,value`.
fn transport_csv<T: Scalar>(d: &TransportExport<T>) -> String {
    let mut out = String::from("matrix,source,target,value\n");
    for (name, m) in [("cost", &d.cost), ("plan", &d.plan), ("policy", &d.policy)] {
        for (k, row) in m.iter().enumerate() {
            for (l, v) in row.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{name},{},{},{v}",
                    csv_field(&d.source_phrases[k]),
                    csv_field(&d.target_phrases[l])
                );
            }
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn heat(v: f64, scale: f64, signed: bool) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    let mix = |c: (f64, f64, f64), w: f64| {
        let ch = |x: f64| (255.0 + (x - 255.0) * w).round() as u8;
        format!("#{:02x}{:02x}{:02x}", ch(c.0), ch(c.1), ch(c.2))
    };
    if signed && t < 0.0 {
        mix((31.0, 119.0, 180.0), -t)
    } else if signed {
        mix((214.0, 39.0, 40.0), t)
    } else {
        mix((31.0, 119.0, 180.0), t.max(0.0))
    }
}

fn transport_svg<T: Scalar>(d: &TransportExport<T>) -> String {
    let k = d.source_phrases.len();
    let l = d.target_phrases.len();
    let cell = (240.0 / k.max(l) as f64).clamp(12.0, 40.0);
    let label = 90.0;
    let panel_w = label + cell * l as f64 + 30.0;
    let width = 3.0 * panel_w + 20.0;
    let height = 60.0 + label + cell * k as f64 + 20.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{width:.0}" height="{height:.0}" fill="white"/>"#);
    let panels = [("cost", &d.cost, true), ("plan", &d.plan, false), ("policy", &d.policy, false)];
    for (p, (title, m, signed)) in panels.into_iter().enumerate() {
        let x0 = 10.0 + p as f64 * panel_w + label;
        let y0 = 40.0 + label;
        let flat: Vec<f64> = m.iter().flatten().map(|v| v.as_f64()).collect();
        let scale = flat.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let _ = writeln!(svg, r#"<text x="{x0:.1}" y="20" font-size="13">{title}</text>"#);
        for (j, name) in d.target_phrases.iter().enumerate() {
            let cx = x0 + (j as f64 + 0.5) * cell;
            let _ = writeln!(
                svg,
                r#"<text x="{cx:.1}" y="{:.1}" transform="rotate(-60 {cx:.1} {:.1})">{}</text>"#,
                y0 - 4.0,
                y0 - 4.0,
                escape(name)
            );
        }
        for (i, row) in m.iter().enumerate() {
            let y = y0 + i as f64 * cell;
            let _ = writeln!(
                svg,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                x0 - 4.0,
                y + 0.5 * cell + 4.0,
                escape(&d.source_phrases[i])
            );
            for (j, v) in row.iter().enumerate() {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.1}" y="{y:.1}" width="{cell:.1}" height="{cell:.1}" fill="{}" stroke="#ccc"><title>{}</title></rect>"##,
                    x0 + j as f64 * cell,
                    heat(v.as_f64(), scale, signed),
                    v
                );
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
