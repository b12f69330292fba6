#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcisep::graph::WeightedGraph;
use rcisep::instances::CvrpInstance;
use rcisep::lp_relax::{build_relaxation, edge_index, emit_rci, Sense, SparseRow};

/// Textbook two-phase tableau simplex with Bland's rule. Minimizes `c·x`
/// subject to `rows` and `0 ≤ x ≤ upper`. Returns `None` when infeasible.
pub fn dense_lp(c: &[f64], rows: &[SparseRow<f64>], upper: &[f64]) -> Option<f64> {
    let n = c.len();
    // constraints: original rows plus x_j ≤ u_j, every rhs made nonnegative
    let mut cons: Vec<(Vec<f64>, Sense, f64)> = Vec::new();
    for r in rows {
        let mut a = vec![0.0; n];
        for &(j, v) in &r.coeffs {
            a[j] += v;
        }
        cons.push((a, r.sense, r.rhs));
    }
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = 1.0;
        cons.push((a, Sense::Le, upper[j]));
    }
    for (a, s, b) in cons.iter_mut() {
        if *b < 0.0 {
            a.iter_mut().for_each(|v| *v = -*v);
            *b = -*b;
            *s = match *s {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
    }
    let m = cons.len();
    let n_slack = cons.iter().filter(|(_, s, _)| *s != Sense::Eq).count();
    let n_art = cons.iter().filter(|(_, s, _)| *s != Sense::Le).count();
    let width = n + n_slack + n_art;
    let mut t = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut si, mut ai) = (n, n + n_slack);
    let mut artificial = Vec::new();
    for (i, (a, s, b)) in cons.iter().enumerate() {
        t[i][..n].copy_from_slice(a);
        t[i][width] = *b;
        match s {
            Sense::Le => {
                t[i][si] = 1.0;
                basis[i] = si;
                si += 1;
            }
            Sense::Ge => {
                t[i][si] = -1.0;
                si += 1;
                t[i][ai] = 1.0;
                basis[i] = ai;
                artificial.push(ai);
                ai += 1;
            }
            Sense::Eq => {
                t[i][ai] = 1.0;
                basis[i] = ai;
                artificial.push(ai);
                ai += 1;
            }
        }
    }
    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| {
        loop {
            // reduced costs
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (i, &bi) in basis.iter().enumerate() {
                    d -= cost[bi] * t[i][j];
                }
                if d < -1e-9 {
                    enter = Some(j);
                    break;
                }
            }
            let Some(e) = enter else { return };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][e] > 1e-9 {
                    let ratio = t[i][width] / t[i][e];
                    let better = match leave {
                        None => true,
                        Some((l, r)) => ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let (l, _) = leave.expect("bounded LP");
            let piv = t[l][e];
            t[l].iter_mut().for_each(|v| *v /= piv);
            for i in 0..t.len() {
                if i != l && t[i][e] != 0.0 {
                    let f = t[i][e];
                    let (src, dst) = if i < l {
                        let (a, b) = t.split_at_mut(l);
                        (&b[0], &mut a[i])
                    } else {
                        let (a, b) = t.split_at_mut(i);
                        (&a[l], &mut b[0])
                    };
                    for (d, s) in dst.iter_mut().zip(src.iter()) {
                        *d -= f * s;
                    }
                }
            }
            basis[l] = e;
        }
    };
    let mut phase1 = vec![0.0; width];
    for &a in &artificial {
        phase1[a] = 1.0;
    }
    run(&mut t, &mut basis, &phase1, width);
    let infeas: f64 = basis.iter().enumerate().map(|(i, &b)| phase1[b] * t[i][width]).sum();
    if infeas > 1e-7 {
        return None;
    }
    // drive remaining zero-level artificials out of the basis where possible
    for i in 0..m {
        if artificial.contains(&basis[i]) {
            if let Some(j) = (0..n + n_slack).find(|&j| t[i][j].abs() > 1e-9 && !basis.contains(&j)) {
                let piv = t[i][j];
                t[i].iter_mut().for_each(|v| *v /= piv);
                for k in 0..m {
                    if k != i && t[k][j] != 0.0 {
                        let f = t[k][j];
                        let row = t[i].clone();
                        for (d, s) in t[k].iter_mut().zip(&row) {
                            *d -= f * s;
                        }
                    }
                }
                basis[i] = j;
            }
        }
    }
    let mut phase2 = vec![0.0; width];
    phase2[..n].copy_from_slice(c);
    run(&mut t, &mut basis, &phase2, n + n_slack);
    Some(basis.iter().enumerate().map(|(i, &b)| phase2[b] * t[i][width]).sum())
}

/// Objective of the relaxation with `cuts` as computed by [`dense_lp`].
pub fn oracle_bound(inst: &CvrpInstance, cut_rows: &[SparseRow<f64>]) -> Option<f64> {
    let model = build_relaxation::<f64>(inst).unwrap();
    let n = inst.num_vertices();
    let mut c = Vec::new();
    let mut u = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            c.push(inst.cost(i, j));
            u.push(model.upper_bound(edge_index(n, i, j)));
        }
    }
    let mut rows = model.degree_rows().to_vec();
    rows.extend_from_slice(cut_rows);
    dense_lp(&c, &rows, &u)
}

/// RCI closure by full subset enumeration: each round adds every violated
/// RCI over all customer subsets, until none is violated.
pub fn closure_bound(inst: &CvrpInstance, tol: f64) -> f64 {
    let mut model = build_relaxation::<f64>(inst).unwrap();
    let n = inst.num_vertices();
    let nc = n - 1;
    assert!(nc <= 14);
    loop {
        let sol = model.solve().unwrap();
        let mut added = 0;
        for mask in 1u32..(1 << nc) {
            let subset: Vec<usize> = (0..nc).filter(|b| mask >> b & 1 == 1).map(|b| b + 1).collect();
            let mut in_set = vec![false; n];
            subset.iter().for_each(|&i| in_set[i] = true);
            let demand: u64 = subset.iter().map(|&i| inst.demands[i] as u64).sum();
            let k = demand.div_ceil(inst.capacity as u64) as f64;
            let crossing = sol.crossing(&in_set);
            if 2.0 * k - crossing > tol && model.add_cut(emit_rci::<f64>(&subset, inst).unwrap()) {
                added += 1;
            }
        }
        if added == 0 {
            return sol.objective;
        }
    }
}

/// Every capacity-feasible routing of the customers as edge-value vectors.
/// Routes are undirected cycles through the depot; single-customer routes
/// use the depot edge twice.
pub fn feasible_solutions(inst: &CvrpInstance, limit: usize) -> Vec<Vec<f64>> {
    let n = inst.num_vertices();
    let mut out = Vec::new();
    let mut routes: Vec<Vec<usize>> = Vec::new();
    fn orderings(block: &[usize]) -> Vec<Vec<usize>> {
        // first element fixed; reflection removed by requiring second < last
        let first = block[0];
        let rest: Vec<usize> = block[1..].to_vec();
        let mut out = Vec::new();
        fn perm(xs: &mut Vec<usize>, k: usize, acc: &mut Vec<Vec<usize>>) {
            if k == xs.len() {
                acc.push(xs.clone());
                return;
            }
            for i in k..xs.len() {
                xs.swap(k, i);
                perm(xs, k + 1, acc);
                xs.swap(k, i);
            }
        }
        let mut rs = rest.clone();
        let mut perms = Vec::new();
        perm(&mut rs, 0, &mut perms);
        for p in perms {
            if p.len() >= 2 && p[0] > p[p.len() - 1] {
                continue;
            }
            let mut r = vec![first];
            r.extend(p);
            out.push(r);
        }
        out
    }
    fn rec(
        inst: &CvrpInstance,
        n: usize,
        unassigned: Vec<usize>,
        routes: &mut Vec<Vec<usize>>,
        out: &mut Vec<Vec<f64>>,
        limit: usize,
    ) {
        if out.len() >= limit {
            return;
        }
        if unassigned.is_empty() {
            // expand every ordering combination
            let options: Vec<Vec<Vec<usize>>> = routes.iter().map(|r| orderings(r)).collect();
            let mut idx = vec![0usize; options.len()];
            loop {
                let mut x = vec![0.0; n * (n - 1) / 2];
                for (r, &k) in options.iter().zip(&idx) {
                    let tour = &r[k];
                    let mut prev = 0;
                    for &v in tour {
                        x[edge_index(n, prev.min(v), prev.max(v))] += 1.0;
                        prev = v;
                    }
                    x[edge_index(n, 0, prev)] += 1.0;
                }
                out.push(x);
                if out.len() >= limit {
                    return;
                }
                let mut p = 0;
                loop {
                    if p == idx.len() {
                        return;
                    }
                    idx[p] += 1;
                    if idx[p] < options[p].len() {
                        break;
                    }
                    idx[p] = 0;
                    p += 1;
                }
            }
        }
        // the smallest unassigned customer opens a new route with any subset
        // of the others
        let first = unassigned[0];
        let others = &unassigned[1..];
        for mask in 0u32..(1 << others.len()) {
            let mut block = vec![first];
            block.extend((0..others.len()).filter(|b| mask >> b & 1 == 1).map(|b| others[b]));
            let load: u64 = block.iter().map(|&i| inst.demands[i] as u64).sum();
            if load > inst.capacity as u64 {
                continue;
            }
            let rest: Vec<usize> = others.iter().copied().filter(|v| !block.contains(v)).collect();
            routes.push(block);
            rec(inst, n, rest, routes, out, limit);
            routes.pop();
        }
    }
    rec(inst, n, (1..n).collect(), &mut routes, &mut out, limit);
    out
}

pub fn row_satisfied(row: &SparseRow<f64>, x: &[f64]) -> bool {
    row.violation(x) <= 1e-9
}

/// Random connected support-like graph: a depot edge to every customer plus
/// random customer edges, weights in (0, 1].
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> WeightedGraph<f64> {
    let mut demands = vec![0u64];
    demands.extend((1..n).map(|_| rng.gen_range(1..=100)));
    let mut edges = Vec::new();
    for j in 1..n {
        edges.push((0, j, rng.gen_range(0.0..2.0)));
    }
    for i in 1..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.push((i, j, rng.gen_range(0.01..1.0)));
            }
        }
    }
    WeightedGraph::new(demands, edges).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
