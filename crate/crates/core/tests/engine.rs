mod common;

use std::collections::BTreeMap;

use rcisep::engine::{
    compare_instances, cutting_plane, read_summary_csv, read_trace_csv, write_summary_csv, write_trace_csv,
    ComponentsSeparator, ExactSeparator, GreedySeparator, Limits, SeparatorSpec, Separator, Termination,
};
use rcisep::instances::{generate_random, parse_cvrplib};
use rcisep::sep_exact::ExactConfig;

#[test]
fn x_n101_k25_parses() {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/X-n101-k25.vrp")).unwrap();
    let inst = parse_cvrplib(&text).unwrap();
    assert_eq!(inst.name, "X-n101-k25");
    assert_eq!(inst.num_customers(), 100);
    assert_eq!(inst.capacity, 206);
    assert_eq!(inst.vehicles, 25);
    assert_eq!(inst.min_fleet(), 25);
    assert_eq!(inst.demands[0], 0);
}

#[test]
fn exact_reaches_closure_on_small_instances() {
    for seed in 0..6 {
        let inst = generate_random(6 + seed as usize % 3, 40 + seed).unwrap();
        let closure = common::closure_bound(&inst, 1e-9);
        let trace = cutting_plane::<f64>(&inst, &mut ExactSeparator::default(), &Limits { max_iter: 1000, time_limit: None })
            .unwrap();
        assert_eq!(trace.termination, Termination::NoCuts);
        assert!((trace.final_lb - closure).abs() <= 1e-6, "{} vs {closure}", trace.final_lb);
        assert!(trace.is_monotone(1e-9));
    }
}

#[test]
fn emitted_cuts_are_valid() {
    for seed in 0..4 {
        let inst = generate_random(6, 90 + seed).unwrap();
        let xs = common::feasible_solutions(&inst, 100_000);
        assert!(!xs.is_empty());
        let seps: Vec<Box<dyn Separator<f64>>> =
            vec![Box::new(ExactSeparator::default()), Box::new(ComponentsSeparator), Box::new(GreedySeparator)];
        for mut sep in seps {
            let trace = cutting_plane::<f64>(&inst, sep.as_mut(), &Limits::for_instance(&inst)).unwrap();
            for s in &trace.cuts {
                let rci = rcisep::lp_relax::emit_rci::<f64>(s, &inst).unwrap();
                assert!(xs.iter().all(|x| common::row_satisfied(&rci.row, x)), "{} cut {s:?}", sep.name());
            }
        }
    }
}

#[test]
fn trace_csv_reparses() {
    let inst = generate_random(12, 5).unwrap();
    let trace = cutting_plane::<f64>(&inst, &mut ExactSeparator::default(), &Limits::for_instance(&inst)).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&trace, &mut buf).unwrap();
    let text = String::from_utf8(buf.clone()).unwrap();
    assert!(text.starts_with("iteration,lb,cuts_added,sep_time_s,lp_pivots\n"));
    let back = read_trace_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), trace.records.len());
    for (a, b) in back.iter().zip(&trace.records) {
        assert_eq!(a.iteration, b.iteration);
        assert_eq!(a.lb, b.lb);
        assert_eq!(a.cuts_added, b.cuts_added);
    }
}

#[test]
fn compare_summary_round_trip() {
    let insts: Vec<_> = (0..3).map(|s| generate_random(8, 60 + s).unwrap()).collect();
    let specs = [SeparatorSpec::Exact(ExactConfig::default()), SeparatorSpec::Components];
    let mut ubs = BTreeMap::new();
    ubs.insert(insts[0].name.clone(), 1e9);
    let rows = compare_instances(&insts, &specs, None, &ubs).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows[0].gap_pct.is_some());
    assert!(rows[2].gap_pct.is_none());
    for pair in rows.chunks(2) {
        assert_eq!(pair[0].separator, "exact");
        assert!(pair[0].final_lb >= pair[1].final_lb - 1e-6);
    }
    let mut buf = Vec::new();
    write_summary_csv(&rows, &mut buf).unwrap();
    assert_eq!(read_summary_csv(buf.as_slice()).unwrap(), rows);
}
