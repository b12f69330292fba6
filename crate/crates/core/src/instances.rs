//! CVRP instances: the data model, a CVRPLIB (TSPLIB-style) reader and
//! writer, and the uniform random generator used for training data.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A CVRP instance. Vertex 0 is always the depot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvrpInstance {
    pub name: String,
    pub coords: Vec<(f64, f64)>,
    pub demands: Vec<u32>,
    pub capacity: u32,
    pub vehicles: u32,
    /// Euclidean distances are multiplied by this factor before rounding.
    /// CVRPLIB files use 1; generated unit-square instances use 1000.
    pub cost_scale: f64,
    costs: Vec<f64>,
}

impl CvrpInstance {
    /// Builds an instance and its rounded-Euclidean cost matrix, checking every
    /// structural invariant.
    pub fn new(
        name: impl Into<String>,
        coords: Vec<(f64, f64)>,
        demands: Vec<u32>,
        capacity: u32,
        vehicles: u32,
        cost_scale: f64,
    ) -> Result<Self> {
        let n = coords.len();
        if demands.len() != n {
            return Err(Error::Validation(format!(
                "{} coordinates but {} demands",
                n,
                demands.len()
            )));
        }
        let mut costs = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let c = rounded_euclidean(coords[i], coords[j], cost_scale);
                costs[i * n + j] = c;
                costs[j * n + i] = c;
            }
        }
        let inst = CvrpInstance {
            name: name.into(),
            coords,
            demands,
            capacity,
            vehicles,
            cost_scale,
            costs,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.coords.len();
        if n < 2 {
            return Err(Error::Validation("instance needs a depot and at least one customer".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Validation("capacity must be positive".into()));
        }
        if self.vehicles == 0 {
            return Err(Error::Validation("vehicle count must be positive".into()));
        }
        if self.demands[0] != 0 {
            return Err(Error::Validation(format!(
                "depot has nonzero demand {}",
                self.demands[0]
            )));
        }
        if let Some(i) = (1..n).find(|&i| self.demands[i] == 0) {
            return Err(Error::Validation(format!("customer {i} has zero demand")));
        }
        if let Some(i) = (1..n).find(|&i| self.demands[i] > self.capacity) {
            return Err(Error::Validation(format!(
                "customer {i} demand {} exceeds capacity {}",
                self.demands[i], self.capacity
            )));
        }
        let min_fleet = ceil_div(self.total_demand(), self.capacity as u64);
        if (self.vehicles as u64) < min_fleet {
            return Err(Error::Validation(format!(
                "{} vehicles cannot cover total demand {} (need {})",
                self.vehicles,
                self.total_demand(),
                min_fleet
            )));
        }
        Ok(())
    }

    /// |V|, depot included.
    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_customers(&self) -> usize {
        self.coords.len() - 1
    }

    #[inline]
    pub fn cost(&self, i: usize, j: usize) -> f64 {
        self.costs[i * self.coords.len() + j]
    }

    pub fn total_demand(&self) -> u64 {
        self.demands.iter().map(|&d| d as u64).sum()
    }

    /// ⌈Σ d / Q⌉ over all customers: the number of demand thresholds `M`
    /// examined by the per-threshold separators.
    pub fn min_fleet(&self) -> u32 {
        ceil_div(self.total_demand(), self.capacity as u64) as u32
    }
}

/// TSPLIB `nint` of the (scaled) Euclidean distance.
fn rounded_euclidean(a: (f64, f64), b: (f64, f64), scale: f64) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    (scale * (dx * dx + dy * dy).sqrt() + 0.5).floor()
}

#[inline]
pub(crate) fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// k(S) = ⌈Σ_{i∈S} d_i / Q⌉.
pub fn k_of_set(subset: &[usize], demands: &[u32], capacity: u32) -> Result<u32> {
    if subset.is_empty() {
        return Err(Error::Validation("k(S) of an empty set".into()));
    }
    let total: u64 = subset.iter().map(|&i| demands[i] as u64).sum();
    Ok(ceil_div(total, capacity as u64) as u32)
}

/// Uniform random instance on the unit square with `n` customers.
///
/// Demands are uniform integers in [1, 100]. The capacity is
/// `⌈r · Σd / n⌉` for a route-size factor `r` drawn uniformly from [5, 12]
/// (raised to the largest demand if needed), and the fleet is the minimum one.
pub fn generate_random(n: usize, seed: u64) -> Result<CvrpInstance> {
    if n < 3 {
        return Err(Error::Validation(format!("need at least 3 customers, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coords: Vec<(f64, f64)> = (0..=n)
        .map(|_| (rng.gen::<f64>(), rng.gen::<f64>()))
        .collect();
    let mut demands = vec![0u32; n + 1];
    for d in demands.iter_mut().skip(1) {
        *d = rng.gen_range(1..=100);
    }
    let total: u64 = demands.iter().map(|&d| d as u64).sum();
    let r: f64 = rng.gen_range(5.0..=12.0);
    let max_d = *demands.iter().max().unwrap_or(&1);
    let capacity = ((r * total as f64 / n as f64).ceil() as u32).max(max_d);
    let vehicles = ceil_div(total, capacity as u64) as u32;
    CvrpInstance::new(
        format!("random-{n}-s{seed}-k{vehicles}"),
        coords,
        demands,
        capacity,
        vehicles,
        1000.0,
    )
}

const COST_SCALE_TAG: &str = "cost scale";

/// Parses a CVRPLIB file with `EDGE_WEIGHT_TYPE : EUC_2D`.
pub fn parse_cvrplib(text: &str) -> Result<CvrpInstance> {
    #[derive(PartialEq)]
    enum Section {
        Header,
        Coords,
        Demands,
        Depot,
    }

    let mut name = String::from("unnamed");
    let mut dimension: Option<usize> = None;
    let mut capacity: Option<u32> = None;
    let mut vehicles_key: Option<u32> = None;
    let mut weight_type: Option<String> = None;
    let mut cost_scale = 1.0;
    let mut coords: Vec<(usize, f64, f64)> = Vec::new();
    let mut demands: Vec<(usize, u32)> = Vec::new();
    let mut depots: Vec<usize> = Vec::new();
    let mut seen = [false; 3];
    let mut section = Section::Header;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        match upper.as_str() {
            "NODE_COORD_SECTION" => {
                section = Section::Coords;
                seen[0] = true;
                continue;
            }
            "DEMAND_SECTION" => {
                section = Section::Demands;
                seen[1] = true;
                continue;
            }
            "DEPOT_SECTION" => {
                section = Section::Depot;
                seen[2] = true;
                continue;
            }
            "EOF" => break,
            _ => {}
        }
        if let Some((key, value)) = line.split_once(':') {
            if !key.trim().contains(char::is_whitespace) && key.trim().chars().any(|c| c.is_ascii_alphabetic()) {
                let key = key.trim().to_ascii_uppercase();
                let value = value.trim();
                match key.as_str() {
                    "NAME" => name = value.to_string(),
                    "DIMENSION" => dimension = Some(parse_num(value, lineno, "DIMENSION")?),
                    "CAPACITY" => capacity = Some(parse_num(value, lineno, "CAPACITY")?),
                    "VEHICLES" => vehicles_key = Some(parse_num(value, lineno, "VEHICLES")?),
                    "EDGE_WEIGHT_TYPE" => weight_type = Some(value.to_ascii_uppercase()),
                    "COMMENT" => {
                        if let Some(rest) = value.strip_prefix(COST_SCALE_TAG) {
                            cost_scale = parse_num(rest.trim(), lineno, "cost scale")?;
                        }
                    }
                    _ => {}
                }
                section = Section::Header;
                continue;
            }
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Header => {
                return Err(Error::Format(format!(
                    "unexpected content at line {}: {line}",
                    lineno + 1
                )))
            }
            Section::Coords => {
                if fields.len() != 3 {
                    return Err(Error::Format(format!("bad coordinate line {}: {line}", lineno + 1)));
                }
                coords.push((
                    parse_num(fields[0], lineno, "node id")?,
                    parse_num(fields[1], lineno, "x")?,
                    parse_num(fields[2], lineno, "y")?,
                ));
            }
            Section::Demands => {
                if fields.len() != 2 {
                    return Err(Error::Format(format!("bad demand line {}: {line}", lineno + 1)));
                }
                let id = parse_num(fields[0], lineno, "node id")?;
                let d: u32 = fields[1].parse().map_err(|_| {
                    Error::Value(format!(
                        "non-integer demand '{}' at line {}",
                        fields[1],
                        lineno + 1
                    ))
                })?;
                demands.push((id, d));
            }
            Section::Depot => {
                for f in fields {
                    let id: i64 = parse_num(f, lineno, "depot id")?;
                    if id >= 1 {
                        depots.push(id as usize);
                    }
                }
            }
        }
    }

    let dimension = dimension.ok_or_else(|| Error::MissingSection("DIMENSION".into()))?;
    let capacity = capacity.ok_or_else(|| Error::MissingSection("CAPACITY".into()))?;
    match weight_type.as_deref() {
        None => return Err(Error::MissingSection("EDGE_WEIGHT_TYPE".into())),
        Some("EUC_2D") => {}
        Some(other) => {
            return Err(Error::Format(format!("unsupported EDGE_WEIGHT_TYPE {other}")))
        }
    }
    for (flag, sec) in seen
        .iter()
        .zip(["NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION"])
    {
        if !flag {
            return Err(Error::MissingSection(sec.into()));
        }
    }

    let mut xy = vec![None; dimension];
    for (id, x, y) in coords {
        let slot = id
            .checked_sub(1)
            .and_then(|i| xy.get_mut(i))
            .ok_or_else(|| Error::Format(format!("node id {id} outside 1..={dimension}")))?;
        *slot = Some((x, y));
    }
    let mut dem = vec![None; dimension];
    for (id, d) in demands {
        let slot = id
            .checked_sub(1)
            .and_then(|i| dem.get_mut(i))
            .ok_or_else(|| Error::Format(format!("node id {id} outside 1..={dimension}")))?;
        *slot = Some(d);
    }
    let depot = match depots.as_slice() {
        [] => return Err(Error::Format("DEPOT_SECTION lists no depot".into())),
        [d] if *d >= 1 && *d <= dimension => d - 1,
        [d] => return Err(Error::Format(format!("depot id {d} outside 1..={dimension}"))),
        _ => return Err(Error::Format("multiple depots are not supported".into())),
    };

    // Depot first, then the remaining vertices in file order.
    let order: Vec<usize> = std::iter::once(depot)
        .chain((0..dimension).filter(|&i| i != depot))
        .collect();
    let mut out_coords = Vec::with_capacity(dimension);
    let mut out_demands = Vec::with_capacity(dimension);
    for &i in &order {
        out_coords.push(xy[i].ok_or_else(|| {
            Error::Format(format!("node {} has no coordinates", i + 1))
        })?);
        out_demands.push(
            dem[i].ok_or_else(|| Error::Format(format!("node {} has no demand", i + 1)))?,
        );
    }
    if out_demands[0] != 0 {
        return Err(Error::Validation(format!(
            "depot has nonzero demand {}",
            out_demands[0]
        )));
    }
    let total: u64 = out_demands.iter().map(|&d| d as u64).sum();
    let vehicles = vehicles_from_name(&name)
        .or(vehicles_key)
        .unwrap_or_else(|| ceil_div(total, capacity.max(1) as u64) as u32);

    CvrpInstance::new(name, out_coords, out_demands, capacity, vehicles, cost_scale)
}

fn parse_num<F: std::str::FromStr>(s: &str, lineno: usize, what: &str) -> Result<F> {
    s.trim()
        .parse()
        .map_err(|_| Error::Value(format!("bad {what} '{s}' at line {}", lineno + 1)))
}

/// Fleet size from a trailing `-kNN` in the instance name (`X-n101-k25`).
fn vehicles_from_name(name: &str) -> Option<u32> {
    let (_, tail) = name.rsplit_once("-k")?;
    if tail.is_empty() || !tail.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    tail.parse().ok()
}

/// Writes the instance in CVRPLIB format; `parse_cvrplib` inverts it.
pub fn to_cvrplib(inst: &CvrpInstance) -> String {
    let mut s = String::new();
    let n = inst.num_vertices();
    let _ = writeln!(s, "NAME : {}", inst.name);
    if inst.cost_scale != 1.0 {
        let _ = writeln!(s, "COMMENT : {COST_SCALE_TAG} {}", inst.cost_scale);
    }
    let _ = writeln!(s, "TYPE : CVRP");
    let _ = writeln!(s, "DIMENSION : {n}");
    let _ = writeln!(s, "EDGE_WEIGHT_TYPE : EUC_2D");
    let _ = writeln!(s, "CAPACITY : {}", inst.capacity);
    if vehicles_from_name(&inst.name) != Some(inst.vehicles) {
        let _ = writeln!(s, "VEHICLES : {}", inst.vehicles);
    }
    let _ = writeln!(s, "NODE_COORD_SECTION");
    for (i, (x, y)) in inst.coords.iter().enumerate() {
        let _ = writeln!(s, "{} {:?} {:?}", i + 1, x, y);
    }
    let _ = writeln!(s, "DEMAND_SECTION");
    for (i, d) in inst.demands.iter().enumerate() {
        let _ = writeln!(s, "{} {}", i + 1, d);
    }
    let _ = writeln!(s, "DEPOT_SECTION");
    let _ = writeln!(s, " 1");
    let _ = writeln!(s, " -1");
    let _ = writeln!(s, "EOF");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "NAME : tiny\nTYPE : CVRP\nDIMENSION : 2\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\nNODE_COORD_SECTION\n1 0 0\n2 3 4\nDEMAND_SECTION\n1 0\n2 5\nDEPOT_SECTION\n1\n-1\nEOF\n";

    #[test]
    fn three_four_five() {
        let inst = parse_cvrplib(TINY).unwrap();
        assert_eq!(inst.cost(0, 1), 5.0);
        assert_eq!(inst.vehicles, 1);
    }

    #[test]
    fn missing_demand_section() {
        let text = TINY.replace("DEMAND_SECTION\n1 0\n2 5\n", "");
        let err = parse_cvrplib(&text).unwrap_err();
        assert!(err.to_string().contains("DEMAND_SECTION"), "{err}");
    }

    #[test]
    fn fractional_demand_is_value_error() {
        let text = TINY.replace("2 5\n", "2 5.5\n");
        assert!(matches!(parse_cvrplib(&text), Err(Error::Value(_))));
    }

    #[test]
    fn depot_with_demand_rejected() {
        let text = TINY.replace("1 0\n2 5", "1 3\n2 5");
        assert!(matches!(parse_cvrplib(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn depot_remapped_to_front() {
        let text = "NAME : r\nDIMENSION : 3\nEDGE_WEIGHT_TYPE : EUC_2D\nCAPACITY : 10\nNODE_COORD_SECTION\n1 1 1\n2 5 5\n3 0 0\nDEMAND_SECTION\n1 4\n2 6\n3 0\nDEPOT_SECTION\n3\n-1\nEOF\n";
        let inst = parse_cvrplib(text).unwrap();
        assert_eq!(inst.coords, vec![(0.0, 0.0), (1.0, 1.0), (5.0, 5.0)]);
        assert_eq!(inst.demands, vec![0, 4, 6]);
    }

    #[test]
    fn k_of_set_examples() {
        let d = [0, 30, 40, 50, 100, 100, 1];
        assert_eq!(k_of_set(&[1, 2, 3], &d, 100).unwrap(), 2);
        assert_eq!(k_of_set(&[6], &d, 100).unwrap(), 1);
        assert_eq!(k_of_set(&[4, 5], &d, 100).unwrap(), 2);
        assert!(k_of_set(&[], &d, 100).is_err());
    }

    #[test]
    fn generator_rejects_tiny() {
        assert!(generate_random(2, 0).is_err());
    }

    #[test]
    fn generated_fleet_is_minimal() {
        let inst = generate_random(50, 7).unwrap();
        assert_eq!(inst.vehicles as u64, ceil_div(inst.total_demand(), inst.capacity as u64));
        assert_eq!(inst.num_customers(), 50);
    }

    #[test]
    fn name_suffix() {
        assert_eq!(vehicles_from_name("X-n101-k25"), Some(25));
        assert_eq!(vehicles_from_name("X-n101"), None);
        assert_eq!(vehicles_from_name("foo-kx"), None);
    }
}
