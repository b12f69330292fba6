use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{cutting_plane, IterationRecord, Limits, RunTrace, SeparationInput, Separator, SeparatorSpec};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::instances::CvrpInstance;
use crate::lp_relax::{SUPPORT_EPS, VIOLATION_TOL};
use crate::sep_exact::violation;
use crate::training::LabeledSample;

/// `(UB − LB) / UB × 100`.
pub fn gap(ub: f64, lb: f64) -> Result<f64> {
    if !(ub > 0.0) {
        return Err(Error::Validation(format!("upper bound must be positive, got {ub}")));
    }
    if lb > ub + 1e-6 {
        return Err(Error::Validation(format!("lower bound {lb} exceeds upper bound {ub}")));
    }
    Ok((ub - lb) / ub * 100.0)
}

/// Aggregates of one separator over a set of recorded support graphs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparationMetrics {
    pub separator: String,
    pub graphs: usize,
    pub cuts: usize,
    /// Mean violation over emitted cuts (0 when none).
    pub avg_violation: f64,
    pub avg_cuts: f64,
    /// Fraction of graphs with at least one violated cut.
    pub success_rate: f64,
    pub time_s: f64,
}

/// Runs `separator` once per distinct recorded support graph. Samples of the
/// same instance and iteration share a graph and count once.
pub fn separation_metrics(samples: &[LabeledSample], separator: &mut dyn Separator<f64>) -> Result<SeparationMetrics> {
    let mut seen: Vec<(&str, usize)> = Vec::new();
    let (mut graphs, mut cuts, mut successes) = (0usize, 0usize, 0usize);
    let mut total_violation = 0.0;
    let start = Instant::now();
    for s in samples {
        let key = (s.instance.as_str(), s.iteration);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let augmented = &s.graph;
        let support = WeightedGraph::new(
            augmented.demands().to_vec(),
            augmented.edges().iter().filter(|e| e.w > SUPPORT_EPS).map(|e| (e.u, e.v, e.w)),
        )?;
        let input = SeparationInput { support: &support, augmented, capacity: s.capacity, vehicles: s.vehicles };
        let found = separator.separate(&input)?;
        let mut violated = 0;
        for subset in &found {
            let v = violation(subset, &support, s.capacity)?;
            if v > VIOLATION_TOL {
                violated += 1;
                total_violation += v;
            }
        }
        graphs += 1;
        cuts += violated;
        successes += (violated > 0) as usize;
    }
    let div = |a: f64, b: usize| if b == 0 { 0.0 } else { a / b as f64 };
    Ok(SeparationMetrics {
        separator: separator.name().to_string(),
        graphs,
        cuts,
        avg_violation: div(total_violation, cuts),
        avg_cuts: div(cuts as f64, graphs),
        success_rate: div(successes as f64, graphs),
        time_s: start.elapsed().as_secs_f64(),
    })
}

pub fn write_metrics_csv<W: Write>(rows: &[SeparationMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: Write>(trace: &RunTrace, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &trace.records {
        w.serialize(r)?;
    }
    if trace.records.is_empty() {
        w.write_record(["iteration", "lb", "cuts_added", "sep_time_s", "lp_pivots"])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: Read>(input: R) -> Result<Vec<IterationRecord>> {
    let mut r = csv::Reader::from_reader(input);
    let records = r.deserialize().collect::<std::result::Result<Vec<IterationRecord>, _>>()?;
    Ok(records)
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub n: usize,
    pub k: u32,
    pub separator: String,
    pub final_lb: f64,
    pub gap_pct: Option<f64>,
    pub iterations: usize,
    pub wall_s: f64,
    pub termination: String,
}

impl SummaryRow {
    pub fn from_trace(inst: &CvrpInstance, separator: &str, trace: &RunTrace, ub: Option<f64>) -> Result<Self> {
        Ok(SummaryRow {
            instance: inst.name.clone(),
            n: inst.num_customers(),
            k: inst.vehicles,
            separator: separator.to_string(),
            final_lb: trace.final_lb,
            gap_pct: ub.map(|u| gap(u, trace.final_lb)).transpose()?,
            iterations: trace.iterations(),
            wall_s: trace.wall_s,
            termination: trace.termination.as_str().to_string(),
        })
    }
}

pub fn write_summary_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(["instance", "n", "k", "separator", "final_lb", "gap_pct", "iterations", "wall_s", "termination"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}

/// Reads `name,value` lines; blank lines and `#` comments are skipped.
pub fn read_ub_file(text: &str) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
        let (name, value) = line.split_once(',').ok_or_else(|| parse_err("expected name,value"))?;
        let value: f64 = value.trim().parse().map_err(|_| parse_err("upper bound is not a number"))?;
        out.insert(name.trim().to_string(), value);
    }
    Ok(out)
}

/// Runs every separator on every instance across worker threads. Rows come
/// back in instance-major, separator-minor order.
pub fn compare_instances(
    instances: &[CvrpInstance],
    separators: &[SeparatorSpec],
    limits: Option<Limits>,
    ubs: &BTreeMap<String, f64>,
) -> Result<Vec<SummaryRow>> {
    let jobs: Vec<(usize, usize)> = (0..instances.len())
        .flat_map(|i| (0..separators.len()).map(move |s| (i, s)))
        .collect();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Result<SummaryRow>>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let j = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        let Some(&(i, s)) = jobs.get(j) else { break };
                        let inst = &instances[i];
                        let spec = &separators[s];
                        let lim = limits.unwrap_or_else(|| Limits::for_instance(inst));
                        let mut sep = spec.build();
                        let row = cutting_plane(inst, sep.as_mut(), &lim)
                            .and_then(|t| SummaryRow::from_trace(inst, spec.name(), &t, ubs.get(&inst.name).copied()));
                        done.push((j, row));
                    }
                    done
                })
            })
            .collect();
        for h in handles {
            for (j, row) in h.join().expect("worker panicked") {
                results[j] = Some(row);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every job ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ComponentsSeparator, Termination};
    use crate::instances::generate_random;

    #[test]
    fn gap_values() {
        assert_eq!(format!("{:.2}", gap(27_591.0, 26_512.38).unwrap()), "3.91");
        assert_eq!(format!("{:.2}", gap(6_686.0, 6_542.30).unwrap()), "2.15");
        assert_eq!(gap(100.0, 100.0).unwrap(), 0.0);
        assert!(matches!(gap(0.0, -1.0), Err(Error::Validation(_))));
        assert!(matches!(gap(10.0, 11.0), Err(Error::Validation(_))));
    }

    #[test]
    fn trace_csv_round_trip() {
        let inst = generate_random(7, 3).unwrap();
        let trace = cutting_plane::<f64>(&inst, &mut ComponentsSeparator, &Limits::for_instance(&inst)).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&trace, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,lb,cuts_added,sep_time_s,lp_pivots\n"));
        assert_eq!(read_trace_csv(&buf[..]).unwrap(), trace.records);
    }

    #[test]
    fn summary_csv_with_and_without_gap() {
        let inst = generate_random(6, 2).unwrap();
        let trace = RunTrace {
            records: vec![IterationRecord { iteration: 0, lb: 5.0, cuts_added: 0, sep_time_s: 0.0, lp_pivots: 3 }],
            final_lb: 5.0,
            termination: Termination::NoCuts,
            cuts: vec![],
            wall_s: 0.5,
        };
        let rows = vec![
            SummaryRow::from_trace(&inst, "exact", &trace, Some(10.0)).unwrap(),
            SummaryRow::from_trace(&inst, "greedy", &trace, None).unwrap(),
        ];
        let mut buf = Vec::new();
        write_summary_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("instance,n,k,separator,final_lb,gap_pct,iterations,wall_s,termination\n"));
        assert_eq!(read_summary_csv(&buf[..]).unwrap(), rows);
        assert_eq!(rows[0].gap_pct, Some(50.0));
    }

    #[test]
    fn ub_file() {
        let ubs = read_ub_file("# best known\nX-n101-k25, 27591\n\nrandom-24,6686.5\n").unwrap();
        assert_eq!(ubs["X-n101-k25"], 27591.0);
        assert_eq!(ubs["random-24"], 6686.5);
        assert!(matches!(read_ub_file("a,b"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn compare_is_ordered() {
        let insts: Vec<_> = (0..2).map(|s| generate_random(6, s).unwrap()).collect();
        let rows = compare_instances(
            &insts,
            &[SeparatorSpec::Components, SeparatorSpec::Greedy],
            None,
            &BTreeMap::new(),
        )
        .unwrap();
        let order: Vec<_> = rows.iter().map(|r| (r.instance.clone(), r.separator.clone())).collect();
        assert_eq!(order[0], (insts[0].name.clone(), "components".into()));
        assert_eq!(order[3], (insts[1].name.clone(), "greedy".into()));
    }
}
