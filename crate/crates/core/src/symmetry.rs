//! Grouping of physical sites into the symbolic sites of an equivalent
//! fully connected network (FCN).
//!
//! A Platonic network with coordination number `N_c` maps onto an FCN of
//! `N_c` sites when its vertices can be coloured with `N_c` colours so that
//! every closed nearest-neighbour neighbourhood contains each colour exactly
//! once. The colour classes are the symbolic sites, and the aggregate
//! coupling between any two of them is then the same for every source site.
//! Such colourings are found by a small backtracking search. Weighted colour
//! refinement seeded by the sink and the initial charge is kept as a
//! diagnostic for networks where no colouring exists.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::dynamics::{self, DynamicsError, IntegrateOptions, Network, NetworkSpec};
use crate::geometry::CouplingMatrix;

/// Relative tolerance for comparing aggregate couplings.
pub const UNIFORMITY_TOLERANCE: f64 = 1e-9;

/// Upper bound on colourings enumerated by [`fcn_partitions`] by default.
pub const DEFAULT_PARTITION_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SymmetryError {
    #[error(
        "quotient is not a uniform FCN: aggregate coupling {found} between blocks {a} and {b} \
         differs from {expected}"
    )]
    NonUniformQuotient {
        a: usize,
        b: usize,
        found: f64,
        expected: f64,
        blocks: Vec<Vec<usize>>,
    },
    #[error("dimension mismatch: map covers {expected} sites, matrix has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Result of weighted colour refinement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Refinement {
    /// Canonical colour per site; equal colours form a block.
    pub colors: Vec<usize>,
    pub rounds: usize,
}

impl Refinement {
    pub fn color_count(&self) -> usize {
        self.colors.iter().max().map_or(0, |&c| c + 1)
    }
}

fn quantize(x: f64, scale: f64) -> i64 {
    (x / scale * 1e9).round() as i64
}

/// Equitable-partition refinement on the weighted coupling graph.
///
/// Colours are ranks of sorted signatures, so the result depends only on
/// the graph and seed, not on the site labelling. Terminates after at most
/// `n` rounds.
pub fn refine_colors(coupling: &CouplingMatrix, seed: &[usize]) -> Refinement {
    let n = coupling.n();
    assert_eq!(seed.len(), n, "seed length must equal site count");
    let scale = coupling
        .as_slice()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut colors = canonical(seed.to_vec());
    let mut count = colors.iter().max().map_or(0, |&c| c + 1);
    let mut rounds = 0;
    loop {
        let signatures: Vec<(usize, Vec<(usize, i64)>)> = (0..n)
            .map(|i| {
                let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
                for j in (0..n).filter(|&j| j != i) {
                    *sums.entry(colors[j]).or_default() += coupling.get(i, j);
                }
                let sig = sums
                    .into_iter()
                    .map(|(c, w)| (c, quantize(w, scale)))
                    .filter(|&(_, w)| w != 0)
                    .collect();
                (colors[i], sig)
            })
            .collect();
        let next = canonical(signatures);
        let next_count = next.iter().max().map_or(0, |&c| c + 1);
        rounds += 1;
        colors = next;
        if next_count == count || rounds >= n {
            break;
        }
        count = next_count;
    }
    Refinement { colors, rounds }
}

/// Replaces each value by the rank of its distinct value.
fn canonical<T: Ord + Clone>(values: Vec<T>) -> Vec<usize> {
    let mut distinct = values.clone();
    distinct.sort();
    distinct.dedup();
    values
        .iter()
        .map(|v| distinct.binary_search(v).expect("value present"))
        .collect()
}

/// Sites joined by the strongest coupling; for a Platonic solid this is the
/// edge graph in either coupling mode.
pub fn nearest_neighbor_graph(coupling: &CouplingMatrix) -> Vec<Vec<usize>> {
    let n = coupling.n();
    let strongest = coupling.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| {
                    j != i && strongest > 0.0 && coupling.get(i, j).abs() >= strongest * (1.0 - UNIFORMITY_TOLERANCE)
                })
                .collect()
        })
        .collect()
}

/// All colourings (up to renaming colours) in which every closed
/// neighbourhood of `graph` is rainbow, at most `limit` of them.
///
/// The graph must be regular of degree `d`; colourings then use `d + 1`
/// colours. Colours are named in order of first appearance along a BFS from
/// `root`.
pub fn fcn_partitions(graph: &[Vec<usize>], root: usize, limit: usize) -> Vec<Vec<usize>> {
    let n = graph.len();
    if n == 0 || root >= n {
        return Vec::new();
    }
    let d = graph[0].len();
    if graph.iter().any(|nb| nb.len() != d) {
        return Vec::new();
    }
    let nc = d + 1;
    if n % nc != 0 {
        return Vec::new();
    }
    // Two sites may share a colour only if no closed neighbourhood holds both,
    // i.e. they are more than two steps apart.
    let conflicts: Vec<Vec<usize>> = (0..n)
        .map(|u| {
            let mut c = vec![false; n];
            for &v in &graph[u] {
                c[v] = true;
                for &w in &graph[v] {
                    c[w] = true;
                }
            }
            c[u] = false;
            (0..n).filter(|&w| c[w]).collect()
        })
        .collect();

    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &v in &graph[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if order.len() != n {
        return Vec::new();
    }

    struct Search<'a> {
        order: &'a [usize],
        conflicts: &'a [Vec<usize>],
        nc: usize,
        limit: usize,
        colors: Vec<Option<usize>>,
        found: Vec<Vec<usize>>,
    }

    impl Search<'_> {
        fn run(&mut self, k: usize, used: usize) {
            if self.found.len() >= self.limit {
                return;
            }
            if k == self.order.len() {
                self.found.push(self.colors.iter().map(|c| c.unwrap()).collect());
                return;
            }
            let u = self.order[k];
            for c in 0..(used + 1).min(self.nc) {
                if self.conflicts[u].iter().any(|&w| self.colors[w] == Some(c)) {
                    continue;
                }
                self.colors[u] = Some(c);
                self.run(k + 1, used.max(c + 1));
                self.colors[u] = None;
            }
        }
    }

    let mut search = Search {
        order: &order,
        conflicts: &conflicts,
        nc,
        limit,
        colors: vec![None; n],
        found: Vec::new(),
    };
    search.run(0, 0);
    search.found
}

/// Partition of the sites into the symbolic sites of an FCN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuotientMap {
    /// Blocks of 0-based site indices, each sorted. Non-sink blocks are
    /// ordered by smallest member; the sink block is last.
    pub groups: Vec<Vec<usize>>,
    pub sink_block: usize,
    /// Aggregate coupling from any site to any other block.
    pub effective_j: f64,
    /// Aggregate coupling from a site to the rest of its own block. A uniform
    /// value only shifts every symbolic-site energy equally.
    pub self_coupling: f64,
    /// Largest relative spread found among the inter-block aggregates.
    pub spread: f64,
}

impl QuotientMap {
    pub fn block_count(&self) -> usize {
        self.groups.len()
    }

    pub fn n_sites(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn block_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_sites()];
        for (b, g) in self.groups.iter().enumerate() {
            for &p in g {
                out[p] = b;
            }
        }
        out
    }

    /// Builds and checks the map for a labelling of sites by block colour.
    pub fn from_colors(coupling: &CouplingMatrix, colors: &[usize], sink_site: usize) -> Result<Self, SymmetryError> {
        let n = coupling.n();
        if colors.len() != n {
            return Err(SymmetryError::DimensionMismatch {
                expected: colors.len(),
                found: n,
            });
        }
        let mut by_color: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (p, &c) in colors.iter().enumerate() {
            by_color.entry(c).or_default().push(p);
        }
        let sink_color = colors[sink_site];
        let mut groups: Vec<Vec<usize>> = by_color
            .iter()
            .filter(|&(&c, _)| c != sink_color)
            .map(|(_, g)| g.clone())
            .collect();
        groups.sort_by_key(|g| g[0]);
        groups.push(by_color[&sink_color].clone());
        let sink_block = groups.len() - 1;

        let mut inter: Option<(f64, (usize, usize))> = None;
        let mut self_j: Option<f64> = None;
        let mut spread = 0.0f64;
        for (a, ga) in groups.iter().enumerate() {
            for (b, gb) in groups.iter().enumerate() {
                for &p in ga {
                    let agg: f64 = gb.iter().filter(|&&q| q != p).map(|&q| coupling.get(p, q)).sum();
                    if a == b {
                        match self_j {
                            None => self_j = Some(agg),
                            Some(r) => check_uniform(agg, r, a, b, &groups)?,
                        }
                        continue;
                    }
                    match inter {
                        None => inter = Some((agg, (a, b))),
                        Some((r, _)) => {
                            spread = spread.max(relative_gap(agg, r));
                            check_uniform(agg, r, a, b, &groups)?;
                        }
                    }
                }
            }
        }
        let effective_j = inter.map_or(0.0, |(r, _)| r);
        if groups.len() > 1 && effective_j == 0.0 {
            return Err(SymmetryError::NonUniformQuotient {
                a: 0,
                b: 1,
                found: 0.0,
                expected: f64::NAN,
                blocks: groups,
            });
        }
        Ok(QuotientMap {
            groups,
            sink_block,
            effective_j,
            self_coupling: self_j.unwrap_or(0.0),
            spread,
        })
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn check_uniform(found: f64, expected: f64, a: usize, b: usize, groups: &[Vec<usize>]) -> Result<(), SymmetryError> {
    if relative_gap(found, expected) > UNIFORMITY_TOLERANCE {
        return Err(SymmetryError::NonUniformQuotient {
            a,
            b,
            found,
            expected,
            blocks: groups.to_vec(),
        });
    }
    Ok(())
}

/// Finds the FCN quotient of a coupling matrix with the sink on `sink_site`.
///
/// Rainbow colourings of the nearest-neighbour graph are tried first. When
/// none exists the seeded refinement partition is checked instead, and its
/// first non-uniform block pair is reported.
pub fn quotient_of(coupling: &CouplingMatrix, sink_site: usize, initial: &[f64]) -> Result<QuotientMap, SymmetryError> {
    let n = coupling.n();
    if initial.len() != n {
        return Err(SymmetryError::DimensionMismatch {
            expected: n,
            found: initial.len(),
        });
    }
    if sink_site >= n {
        return Err(DynamicsError::SiteOutOfRange { site: sink_site, n }.into());
    }
    let graph = nearest_neighbor_graph(coupling);
    let mut first_error = None;
    for colors in fcn_partitions(&graph, sink_site, DEFAULT_PARTITION_LIMIT) {
        match QuotientMap::from_colors(coupling, &colors, sink_site) {
            Ok(map) => return Ok(map),
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_error {
        return Err(e);
    }
    let seed: Vec<(bool, i64)> = (0..n)
        .map(|i| (i == sink_site, (initial[i] * 1e12).round() as i64))
        .collect();
    let refined = refine_colors(coupling, &canonical(seed));
    QuotientMap::from_colors(coupling, &refined.colors, sink_site)
}

pub fn discover_quotient(spec: &NetworkSpec) -> Result<QuotientMap, SymmetryError> {
    let mut initial = vec![0.0; spec.n()];
    for &(site, p) in &spec.initial {
        if site >= spec.n() {
            return Err(DynamicsError::SiteOutOfRange { site, n: spec.n() }.into());
        }
        initial[site] += p;
    }
    quotient_of(&spec.coupling, spec.sink_site, &initial)
}

/// `ρ̃_ab = Σ_{p∈a, q∈b} ρ_pq`.
pub fn aggregate(rho: &DMatrix<Complex64>, map: &QuotientMap) -> Result<DMatrix<Complex64>, SymmetryError> {
    let n = map.n_sites();
    if rho.nrows() != n || rho.ncols() != n {
        return Err(SymmetryError::DimensionMismatch {
            expected: n,
            found: rho.nrows(),
        });
    }
    let m = map.block_count();
    Ok(DMatrix::from_fn(m, m, |a, b| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &p in &map.groups[a] {
            for &q in &map.groups[b] {
                acc += rho[(p, q)];
            }
        }
        acc
    }))
}

/// The `N_c`-site FCN network equivalent to `net` under `map`.
pub fn quotient_network(net: &Network, map: &QuotientMap) -> Result<Network, SymmetryError> {
    let initial = aggregate(&net.initial, map)?;
    Ok(Network::fully_connected(
        map.block_count(),
        map.effective_j,
        map.sink_block,
        net.rates,
        initial,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EquivalenceReport {
    /// Max entrywise `|aggregate(ρ_full) − ρ_FCN|` over all samples.
    pub max_rho_deviation: f64,
    pub max_env_deviation: f64,
    pub max_target_deviation: f64,
    /// Sample time of the largest deviation of any kind.
    pub worst_time: f64,
    pub samples: usize,
}

impl EquivalenceReport {
    pub fn max_deviation(&self) -> f64 {
        self.max_rho_deviation
            .max(self.max_env_deviation)
            .max(self.max_target_deviation)
    }
}

/// Integrates the full network and its FCN quotient side by side and
/// reports how far the aggregated full state strays from the FCN state.
pub fn verify_equivalence(
    spec: &NetworkSpec,
    map: &QuotientMap,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<EquivalenceReport, SymmetryError> {
    compare_with_quotient(&spec.network()?, map, t_end, opts)
}

pub fn compare_with_quotient(
    net: &Network,
    map: &QuotientMap,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<EquivalenceReport, SymmetryError> {
    let full = dynamics::integrate(net, t_end, opts)?;
    let reduced = dynamics::integrate(&quotient_network(net, map)?, t_end, opts)?;
    let mut report = EquivalenceReport {
        max_rho_deviation: 0.0,
        max_env_deviation: 0.0,
        max_target_deviation: 0.0,
        worst_time: 0.0,
        samples: full.samples.len(),
    };
    let mut worst = 0.0f64;
    for (f, r) in full.samples.iter().zip(&reduced.samples) {
        let agg = aggregate(&f.rho, map)?;
        let d_rho = (&agg - &r.rho).iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let d_env = (f.rho_env - r.rho_env).abs();
        let d_target = (f.rho_target - r.rho_target).abs();
        report.max_rho_deviation = report.max_rho_deviation.max(d_rho);
        report.max_env_deviation = report.max_env_deviation.max(d_env);
        report.max_target_deviation = report.max_target_deviation.max(d_target);
        let here = d_rho.max(d_env).max(d_target);
        if here > worst {
            worst = here;
            report.worst_time = f.t;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::NoiseRates;
    use crate::geometry::{build_solid, coupling_matrix, CouplingMode, SolidKind};

    fn nn(kind: SolidKind) -> CouplingMatrix {
        coupling_matrix(&build_solid(kind), CouplingMode::NearestNeighbor, 1.0)
    }

    #[test]
    fn cube_groups_are_antipodal_pairs() {
        let c = nn(SolidKind::Cube);
        let mut init = vec![0.0; 8];
        init[0] = 1.0;
        let map = quotient_of(&c, 7, &init).unwrap();
        assert_eq!(map.groups, vec![vec![0, 6], vec![1, 4], vec![2, 5], vec![3, 7]]);
        assert_eq!(map.sink_block, 3);
        assert_eq!(map.effective_j, 1.0);
        assert_eq!(map.self_coupling, 0.0);
    }

    #[test]
    fn tetrahedron_is_its_own_quotient() {
        let c = nn(SolidKind::Tetrahedron);
        let map = quotient_of(&c, 3, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(map.groups, vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!((map.effective_j - 1.0).abs() < 1e-12);
    }

    #[test]
    fn icosahedron_pairs_antipodes() {
        let solid = build_solid(SolidKind::Icosahedron);
        let anti = solid.antipodal_map().unwrap();
        let map = quotient_of(&nn(SolidKind::Icosahedron), 11, &[0.0; 12]).unwrap();
        assert_eq!(map.block_count(), 6);
        for g in &map.groups {
            assert_eq!(g.len(), 2);
            assert_eq!(anti[g[0]], g[1]);
        }
        assert_eq!(map.effective_j, 0.125);
    }

    #[test]
    fn all_pairs_cube_carries_uniform_long_range_terms() {
        let c = coupling_matrix(&build_solid(SolidKind::Cube), CouplingMode::AllPairs, 1.0);
        let map = quotient_of(&c, 7, &[0.0; 8]).unwrap();
        assert!((map.effective_j - (1.0 + 2f64.powf(-1.5))).abs() < 1e-12);
        assert!((map.self_coupling - 3f64.powf(-1.5)).abs() < 1e-12);
    }

    #[test]
    fn octahedron_and_dodecahedron_have_no_rainbow_colouring() {
        for kind in [SolidKind::Octahedron, SolidKind::Dodecahedron] {
            let g = nearest_neighbor_graph(&nn(kind));
            assert!(fcn_partitions(&g, 0, 8).is_empty(), "{kind}");
        }
    }

    #[test]
    fn octahedron_quotient_is_non_uniform() {
        let c = nn(SolidKind::Octahedron);
        let mut init = vec![0.0; 6];
        init[0] = 1.0;
        let err = quotient_of(&c, 5, &init).unwrap_err();
        assert!(matches!(err, SymmetryError::NonUniformQuotient { .. }), "{err}");
    }

    #[test]
    fn refinement_respects_seed_and_terminates() {
        let c = nn(SolidKind::Cube);
        let mut seed = vec![0; 8];
        seed[7] = 1;
        let r = refine_colors(&c, &seed);
        assert!(r.rounds <= 8);
        // Distance classes from the sink: 1 + 3 + 3 + 1.
        assert_eq!(r.color_count(), 4);
        let unseeded = refine_colors(&c, &[0; 8]);
        assert_eq!(unseeded.color_count(), 1);
    }

    #[test]
    fn aggregate_of_maximally_mixed_state() {
        let map = quotient_of(&nn(SolidKind::Cube), 7, &[0.0; 8]).unwrap();
        let rho = DMatrix::from_diagonal_element(8, 8, Complex64::new(0.125, 0.0));
        let agg = aggregate(&rho, &map).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = if a == b { 0.25 } else { 0.0 };
                assert_eq!(agg[(a, b)], Complex64::new(want, 0.0));
            }
        }
    }

    #[test]
    fn aggregate_rejects_wrong_size() {
        let map = quotient_of(&nn(SolidKind::Cube), 7, &[0.0; 8]).unwrap();
        let rho = DMatrix::zeros(4, 4);
        assert_eq!(
            aggregate(&rho, &map).unwrap_err(),
            SymmetryError::DimensionMismatch { expected: 8, found: 4 }
        );
    }

    #[test]
    fn tetrahedron_equivalence_is_exact() {
        let rates = NoiseRates::new(0.4, 0.1, 1.0).unwrap();
        let spec = NetworkSpec::standard(SolidKind::Tetrahedron, CouplingMode::AllPairs, 1.0, rates);
        let map = discover_quotient(&spec).unwrap();
        let rep = verify_equivalence(&spec, &map, 10.0, &IntegrateOptions::with_stride(0.5)).unwrap();
        assert!(rep.max_deviation() < 1e-10, "{rep:?}");
    }
}
