//! CSV, JSON and SVG outputs.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses
//! back to the identical `f64`.
//!
//! | file | columns |
//! |------|---------|
//! | trajectories | `resource,event,window,arrival,psi,pattern,x_1..x_n` |
//! | moments | `resource,event,mean_1..mean_n,var_1..var_n` |
//! | zeta | `l,tau,a_1_1..a_N_n,b_1_1..b_N_n` (block `j`, agent `i`) |
//! | replicas | `index,seed,final_psi,avg_a_1..avg_a_n,avg_b_1..avg_b_n` |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use plotters::prelude::*;
use serde::Serialize;

use crate::aimd::{inter_event_time, ResourceParams};
use crate::engine::{MetaEventRecord, TrajectoryRow};
use crate::error::{Error, Result};
use crate::experiment::{MomentSeries, ReplicaSummary};
use crate::Resource;

/// Round-trip exact float formatting.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_owned(),
        source,
    })
}

fn write_rows<I>(path: &Path, header: Vec<String>, rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let wrap = |source| Error::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(wrap)?;
    for row in rows {
        w.write_record(&row).map_err(wrap)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}_{i}"))
}

/// Anything [`emit_csv`] can write.
pub enum CsvData<'a> {
    Trajectories { n: usize, rows: &'a [TrajectoryRow] },
    Moments(&'a [&'a MomentSeries]),
    Zeta { n: usize, window: usize, records: &'a [MetaEventRecord] },
    Replicas { n: usize, summaries: &'a [ReplicaSummary] },
}

pub fn emit_csv(data: CsvData<'_>, path: &Path) -> Result<()> {
    match data {
        CsvData::Trajectories { n, rows } => {
            let header = ["resource", "event", "window", "arrival", "psi", "pattern"]
                .into_iter()
                .map(String::from)
                .chain(numbered("x", n))
                .collect();
            write_rows(
                path,
                header,
                rows.iter().map(|r| {
                    let mut rec = vec![
                        r.resource.to_string(),
                        r.event.to_string(),
                        r.window.to_string(),
                        fmt_f64(r.arrival),
                        fmt_f64(r.psi),
                        r.pattern.to_string(),
                    ];
                    rec.extend(r.shares.as_slice().iter().map(|&v| fmt_f64(v)));
                    rec
                }),
            )
        }
        CsvData::Moments(series) => {
            let n = series.first().map_or(0, |s| s.n);
            let header = ["resource", "event"]
                .into_iter()
                .map(String::from)
                .chain(numbered("mean", n))
                .chain(numbered("var", n))
                .collect();
            write_rows(
                path,
                header,
                series.iter().flat_map(|s| {
                    (0..s.events()).map(move |k| {
                        let mut rec = vec![s.resource.to_string(), k.to_string()];
                        rec.extend(s.mean_at(k).iter().chain(s.variance_at(k)).map(|&v| fmt_f64(v)));
                        rec
                    })
                }),
            )
        }
        CsvData::Zeta { n, window, records } => {
            let mut header = vec!["l".to_owned(), "tau".to_owned()];
            for c in Resource::BOTH {
                for j in 1..=window {
                    header.extend((1..=n).map(|i| format!("{c}_{j}_{i}")));
                }
            }
            write_rows(
                path,
                header,
                records.iter().map(|r| {
                    let mut rec = vec![r.l.to_string(), fmt_f64(r.tau)];
                    rec.extend(r.zeta.to_vector().into_iter().map(fmt_f64));
                    rec
                }),
            )
        }
        CsvData::Replicas { n, summaries } => {
            let header = ["index", "seed", "final_psi"]
                .into_iter()
                .map(String::from)
                .chain(numbered("avg_a", n))
                .chain(numbered("avg_b", n))
                .collect();
            write_rows(
                path,
                header,
                summaries.iter().map(|s| {
                    let mut rec = vec![s.index.to_string(), s.seed.to_string(), fmt_f64(s.final_psi)];
                    rec.extend(s.time_average_a.iter().chain(&s.time_average_b).map(|&v| fmt_f64(v)));
                    rec
                }),
            )
        }
    }
}

/// Pretty-printed JSON with a trailing newline.
pub fn emit_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_owned(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io(e.into()))?;
    writeln!(w).map_err(io)?;
    w.flush().map_err(io)
}

/// Total utilization `sum_i x_i` of each resource over wall-clock time.
#[derive(Debug, Clone, Default)]
pub struct UtilizationSeries {
    pub a: Vec<(f64, f64)>,
    pub b: Vec<(f64, f64)>,
}

impl UtilizationSeries {
    /// Rebuilds the sawtooth from trajectory rows: the resource sits at
    /// capacity from its arrival until its clock releases it, drops by the
    /// applied pattern, and grows linearly to the next arrival.
    pub fn from_rows(rows: &[TrajectoryRow], params_a: &ResourceParams, params_b: &ResourceParams) -> Self {
        let mut out = Self::default();
        for r in rows {
            let (params, pts) = match r.resource {
                Resource::A => (params_a, &mut out.a),
                Resource::B => (params_b, &mut out.b),
            };
            let cap = params.capacity();
            let t = inter_event_time(params, &r.pattern, &r.shares);
            pts.push((r.arrival, cap));
            if r.psi > r.arrival {
                pts.push((r.psi, cap));
            }
            pts.push((r.psi, cap - params.alpha_sum() * t));
        }
        out
    }
}

pub enum Plot<'a> {
    /// Total utilization per resource over time.
    Utilization(&'a UtilizationSeries),
    /// Per-agent ensemble mean with a band of one variance on each side.
    Moments(&'a MomentSeries),
}

fn padded(lo: f64, hi: f64) -> std::ops::Range<f64> {
    if hi > lo {
        lo..hi
    } else {
        lo - 0.5..hi + 0.5
    }
}

fn plot_err(path: &Path) -> impl Fn(String) -> Error + '_ {
    move |message| Error::Plot {
        path: path.to_owned(),
        message,
    }
}

/// Writes a standalone SVG.
pub fn emit_plot(plot: Plot<'_>, path: &Path) -> Result<()> {
    let err = plot_err(path);
    let root = SVGBackend::new(path, (960, 540)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| err(e.to_string()))?;
    match plot {
        Plot::Utilization(s) => {
            if s.a.is_empty() && s.b.is_empty() {
                return Err(err("empty utilization series".into()));
            }
            let all = s.a.iter().chain(&s.b);
            let (t0, t1) = all.clone().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.0), hi.max(p.0))
            });
            let (u0, u1) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p.1), hi.max(p.1))
            });
            let mut chart = ChartBuilder::on(&root)
                .caption("Resource utilization", ("sans-serif", 22))
                .margin(12)
                .x_label_area_size(36)
                .y_label_area_size(50)
                .build_cartesian_2d(padded(t0, t1), padded(u0.min(0.0), u1 * 1.05))
                .map_err(|e| err(e.to_string()))?;
            chart
                .configure_mesh()
                .x_desc("time")
                .y_desc("total share")
                .draw()
                .map_err(|e| err(e.to_string()))?;
            for (pts, color, label) in [(&s.a, BLUE, "a"), (&s.b, RED, "b")] {
                chart
                    .draw_series(LineSeries::new(pts.iter().copied(), color.stroke_width(1)))
                    .map_err(|e| err(e.to_string()))?
                    .label(format!("resource {label}"))
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(e.to_string()))?;
        }
        Plot::Moments(m) => {
            let events = m.events();
            if events == 0 || m.n == 0 {
                return Err(err("empty moment series".into()));
            }
            let hi = (0..events)
                .flat_map(|k| m.mean_at(k).iter().zip(m.variance_at(k)).map(|(a, v)| a + v))
                .fold(0.0, f64::max);
            let mut chart = ChartBuilder::on(&root)
                .caption(
                    format!("Resource {}: ensemble mean and variance ({} runs)", m.resource, m.replicas),
                    ("sans-serif", 22),
                )
                .margin(12)
                .x_label_area_size(36)
                .y_label_area_size(50)
                .build_cartesian_2d(padded(0.0, (events - 1) as f64), 0.0..hi.max(1e-6) * 1.05)
                .map_err(|e| err(e.to_string()))?;
            chart
                .configure_mesh()
                .x_desc("capacity event")
                .y_desc("share")
                .draw()
                .map_err(|e| err(e.to_string()))?;
            for i in 0..m.n {
                let color = Palette99::pick(i).to_rgba();
                let mean: Vec<f64> = m.agent_mean(i).collect();
                let var: Vec<f64> = m.agent_variance(i).collect();
                let band: Vec<(f64, f64)> = (0..events)
                    .map(|k| (k as f64, mean[k] + var[k]))
                    .chain((0..events).rev().map(|k| (k as f64, (mean[k] - var[k]).max(0.0))))
                    .collect();
                chart
                    .draw_series(std::iter::once(Polygon::new(band, color.mix(0.2).filled())))
                    .map_err(|e| err(e.to_string()))?;
                chart
                    .draw_series(LineSeries::new(
                        mean.iter().enumerate().map(|(k, &v)| (k as f64, v)),
                        color.stroke_width(1),
                    ))
                    .map_err(|e| err(e.to_string()))?
                    .label(format!("agent {}", i + 1))
                    .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            }
            chart
                .configure_series_labels()
                .background_style(WHITE.mix(0.8))
                .border_style(BLACK)
                .draw()
                .map_err(|e| err(e.to_string()))?;
        }
    }
    root.present().map_err(|e| err(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aimd::{DropPattern, ShareVector};

    fn series(events: usize) -> MomentSeries {
        MomentSeries {
            resource: Resource::A,
            n: 2,
            replicas: 3,
            mean: (0..events).flat_map(|k| [0.5 - 0.01 * k as f64, 0.5 + 0.01 * k as f64]).collect(),
            variance: vec![0.001; 2 * events],
        }
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, 1.0 / 3.0, 5e-324, f64::MAX, -0.0, 0.6180339887498949] {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(back.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn empty_series_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let s = series(0);
        emit_csv(CsvData::Moments(&[&s]), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "resource,event,mean_1,mean_2,var_1,var_2\n");
    }

    #[test]
    fn three_rows_four_lines_and_exact_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let s = series(3);
        emit_csv(CsvData::Moments(&[&s]), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec.unwrap();
            let vals: Vec<f64> = rec.iter().skip(2).map(|v| v.parse().unwrap()).collect();
            assert_eq!(&vals[..2], s.mean_at(k));
            assert_eq!(&vals[2..], s.variance_at(k));
        }
    }

    #[test]
    fn trajectory_csv_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let row = TrajectoryRow {
            resource: Resource::B,
            event: 3,
            window: 0,
            arrival: 1.5,
            psi: 2.0,
            pattern: DropPattern::new(vec![true, false]),
            shares: ShareVector::new(vec![0.25, 0.75]).unwrap(),
        };
        emit_csv(CsvData::Trajectories { n: 2, rows: &[row] }, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "resource,event,window,arrival,psi,pattern,x_1,x_2");
        assert!(lines.next().unwrap().starts_with("b,3,0,1.5000000000000000e0,2.0000000000000000e0,10,"));
    }

    #[test]
    fn plots_write_svg_and_reject_empty() {
        let dir = tempfile::tempdir().unwrap();
        let one = series(1);
        let path = dir.path().join("one.svg");
        emit_plot(Plot::Moments(&one), &path).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().contains("<svg"));
        let many = series(50);
        emit_plot(Plot::Moments(&many), &dir.path().join("many.svg")).unwrap();

        let empty = series(0);
        assert!(matches!(emit_plot(Plot::Moments(&empty), &dir.path().join("e.svg")), Err(Error::Plot { .. })));
        let u = UtilizationSeries::default();
        assert!(emit_plot(Plot::Utilization(&u), &dir.path().join("u.svg")).is_err());
        let u = UtilizationSeries {
            a: vec![(0.0, 1.0)],
            b: vec![],
        };
        emit_plot(Plot::Utilization(&u), &dir.path().join("u1.svg")).unwrap();
    }

    #[test]
    fn json_has_trailing_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        emit_json(&serde_json::json!({"pass": true}), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.ends_with("}\n"));
    }
}
