//! Reports, CSV time series and geometry documents.
//!
//! Structured results are TOML; dense series are CSV with numbers written to 12
//! significant digits so they parse back to the logged values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conflict::{VehicleId, VehicleKind};
use crate::error::{Error, Result};
use crate::geometry::{IntersectionParams, VehicleFootprint};
use crate::scenario::Scenario;
use crate::sim::{EpisodeLog, EpisodeSummary, PairGap, TraceSample};

/// `x` in decimal with 12 significant digits (scientific outside a readable range).
pub fn fmt12(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let e = x.abs().log10().floor() as i32;
    if !(-6..=15).contains(&e) {
        return format!("{x:.11e}");
    }
    let s = format!("{:.*}", (11 - e).max(0) as usize, x);
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn kind_str(k: VehicleKind) -> &'static str {
    match k {
        VehicleKind::Cav => "cav",
        VehicleKind::Hdv => "hdv",
    }
}

fn parse_f(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number {s:?}")))
}

/// Per-vehicle kinematics: vehicle, kind, t, p, v, a, x, y.
pub fn write_vehicles_csv<W: std::io::Write>(log: &EpisodeLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["vehicle", "kind", "t", "p", "v", "a", "x", "y"])?;
    for v in &log.vehicles {
        for s in &v.samples {
            out.write_record([
                v.id.to_string(),
                kind_str(v.kind).to_string(),
                fmt12(s.t),
                fmt12(s.p),
                fmt12(s.v),
                fmt12(s.a),
                fmt12(s.x),
                fmt12(s.y),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_vehicles_csv<R: std::io::Read>(r: R) -> Result<Vec<(VehicleId, TraceSample)>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        if rec.len() != 8 {
            return Err(Error::Parse(format!("expected 8 columns, got {}", rec.len())));
        }
        let id = rec[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad vehicle id {:?}", &rec[0])))?;
        out.push((
            id,
            TraceSample {
                t: parse_f(&rec[2])?,
                p: parse_f(&rec[3])?,
                v: parse_f(&rec[4])?,
                a: parse_f(&rec[5])?,
                x: parse_f(&rec[6])?,
                y: parse_f(&rec[7])?,
            },
        ));
    }
    Ok(out)
}

/// Minimum gap per pair and the critical zone where it occurred.
pub fn write_gaps_csv<W: std::io::Write>(gaps: &[PairGap], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "leader",
        "follower",
        "leader_kind",
        "follower_kind",
        "overlapping",
        "min_gap",
        "p_out",
        "p_in",
    ])?;
    for g in gaps {
        out.write_record([
            g.leader.to_string(),
            g.follower.to_string(),
            kind_str(g.leader_kind).into(),
            kind_str(g.follower_kind).into(),
            g.overlapping.to_string(),
            fmt12(g.min_gap),
            fmt12(g.p_out),
            fmt12(g.p_in),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Gap-vs-time series of overlapping-path pairs.
pub fn write_gap_series_csv<W: std::io::Write>(gaps: &[PairGap], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["leader", "follower", "t", "gap"])?;
    for g in gaps {
        for &(t, gap) in &g.series {
            out.write_record([
                g.leader.to_string(),
                g.follower.to_string(),
                fmt12(t),
                fmt12(gap),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Per-iteration solver statistics.
pub fn write_iterations_csv<W: std::io::Write>(log: &EpisodeLog, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "iter",
        "time",
        "active_cavs",
        "rows",
        "dropped_rows",
        "scp_iterations",
        "qp_time",
        "objective",
        "max_slack",
        "kkt",
        "status",
        "stc_objective",
        "stc_time",
        "stc_iterations",
        "deviation",
    ])?;
    for it in &log.iterations {
        let stc = it.stc.map_or_else(
            || vec![String::new(); 4],
            |s| {
                vec![
                    fmt12(s.objective),
                    fmt12(s.time),
                    s.iterations.to_string(),
                    fmt12(s.deviation),
                ]
            },
        );
        let mut rec = vec![
            it.iter.to_string(),
            fmt12(it.time),
            it.active_cavs.to_string(),
            it.rows.to_string(),
            it.dropped_rows.to_string(),
            it.scp_iterations.to_string(),
            fmt12(it.qp_time),
            fmt12(it.objective),
            fmt12(it.max_slack),
            fmt12(it.kkt),
            format!("{:?}", it.status).to_lowercase(),
        ];
        rec.extend(stc);
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Summary of one episode as written to reports (gap series go to CSV instead).
pub fn report_summary(s: &EpisodeSummary) -> EpisodeSummary {
    let mut s = s.clone();
    for g in &mut s.gaps {
        g.series.clear();
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub cost: String,
    pub mode: String,
    /// True when every episode kept the safety invariants.
    pub safe: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<crate::batch::BatchStats>,
    #[serde(default)]
    pub episodes: Vec<EpisodeSummary>,
}

impl RunReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<RunReport> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Writes the CSV series and the per-episode summary of `log` into `dir`.
pub fn write_episode(dir: &Path, log: &EpisodeLog, s: &EpisodeSummary) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_vehicles_csv(log, fs::File::create(dir.join("vehicles.csv"))?)?;
    write_iterations_csv(log, fs::File::create(dir.join("iterations.csv"))?)?;
    write_gaps_csv(&s.gaps, fs::File::create(dir.join("gaps.csv"))?)?;
    write_gap_series_csv(&s.gaps, fs::File::create(dir.join("gap_series.csv"))?)?;
    let text = toml::to_string(&report_summary(s)).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(dir.join("summary.toml"), text)?;
    if !log.notes.is_empty() {
        fs::write(dir.join("notes.txt"), log.notes.join("\n") + "\n")?;
    }
    Ok(())
}

/// Saves the QP attached to a solver failure; returns where it went.
pub fn write_failure_dump(dir: &Path, err: &Error) -> Result<Option<PathBuf>> {
    if let Error::Infeasible {
        dump: Some(text), ..
    } = err
    {
        fs::create_dir_all(dir)?;
        let path = dir.join("qp_dump.txt");
        fs::write(&path, text.as_str())?;
        return Ok(Some(path));
    }
    Ok(None)
}

/// Geometry section of a scenario file, readable on its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryDocument {
    pub intersection: IntersectionParams,
    #[serde(default)]
    pub footprint: VehicleFootprint,
}

impl GeometryDocument {
    pub fn of(sc: &Scenario) -> GeometryDocument {
        GeometryDocument {
            intersection: sc.file.intersection,
            footprint: sc.file.footprint,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<GeometryDocument> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Sampled reference paths: path, p, x, y, heading, curvature, v_lim.
pub fn write_paths_csv<W: std::io::Write>(sc: &Scenario, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["path", "p", "x", "y", "heading", "curvature", "v_lim"])?;
    for path in &sc.intersection.paths {
        for s in &path.samples {
            out.write_record([
                path.path_id.clone(),
                fmt12(s.p),
                fmt12(s.x),
                fmt12(s.y),
                fmt12(s.psi),
                fmt12(s.kappa),
                fmt12(s.v_lim),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt12_keeps_twelve_digits() {
        assert_eq!(fmt12(1.0), "1");
        assert_eq!(fmt12(0.1), "0.1");
        assert_eq!(fmt12(-2.5e-3), "-0.0025");
        assert_eq!(fmt12(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt12(123456.789), "123456.789");
        for x in [1e-9, 3.7e20, -4.2e-12, 13.888888888889, 1e15] {
            let back: f64 = fmt12(x).parse().unwrap();
            assert!((back - x).abs() <= 1e-11 * x.abs(), "{x} -> {}", fmt12(x));
        }
    }

    #[test]
    fn geometry_document_round_trips() {
        let sc = Scenario::bundled("scenario1").unwrap();
        let doc = GeometryDocument::of(&sc);
        let back = GeometryDocument::parse(&doc.to_toml().unwrap()).unwrap();
        assert_eq!(doc, back);
    }
}
