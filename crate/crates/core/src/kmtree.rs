//! The labeled flag tree behind quantitative non-divergence, its
//! weakly-ordered structure, the mod-6 partitions of each level, and the
//! covering of high-height times by bad sets.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::flow::{flow_matrix, FlowSpec, PolynomialCurve};
use crate::lattice::{
    enumerate_primitive, hnf_rows, shortest_vector, subsets, IntegerLattice, NormKind,
    UnimodularBasis,
};
use crate::poly::Poly;

/// Width given to components that touch the threshold at a single point.
pub const TOUCH_WIDTH: f64 = 1e-9;

/// Tolerance for comparing interval endpoints produced by root finding.
pub const ENDPOINT_TOL: f64 = 1e-9;

/// Largest number of grid cells used to collect candidate sublattices.
pub const MAX_CELLS: usize = 2_000_000;

pub type Interval = (f64, f64);

/// The data `(phi, g, a_t)` defining `s -> a_t phi(s) g Z^dim`.
#[derive(Debug, Clone)]
pub struct KmInput {
    pub curve: PolynomialCurve,
    pub g: DMatrix<f64>,
    pub flow: FlowSpec,
    pub t: f64,
    /// Minors of `phi(s) g` indexed by rank, row subset and column subset.
    minors: Vec<Vec<Vec<Poly>>>,
}

fn poly_det(m: &[Vec<Poly>]) -> Poly {
    let n = m.len();
    match n {
        0 => Poly::constant(1.0),
        1 => m[0][0].clone(),
        _ => {
            let mut acc = Poly::zero();
            for j in 0..n {
                let minor: Vec<Vec<Poly>> = (1..n)
                    .map(|i| (0..n).filter(|&c| c != j).map(|c| m[i][c].clone()).collect())
                    .collect();
                let term = m[0][j].mul(&poly_det(&minor));
                acc = if j % 2 == 0 { acc.add(&term) } else { acc.sub(&term) };
            }
            acc
        }
    }
}

impl KmInput {
    pub fn new(curve: PolynomialCurve, g: DMatrix<f64>, flow: FlowSpec, t: f64) -> Result<Self> {
        let n = curve.dim();
        if g.nrows() != n || g.ncols() != n || flow.dim() != n {
            return Err(LabError::InvalidParameter("curve, g and flow dimensions differ".into()));
        }
        if n > 3 {
            return Err(LabError::InvalidParameter("tree construction supports dim <= 3".into()));
        }
        let e = curve.entries();
        let b: Vec<Vec<Poly>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        (0..n).fold(Poly::zero(), |acc, l| acc.add(&e[i * n + l].scale(g[(l, j)])))
                    })
                    .collect()
            })
            .collect();
        let mut minors = vec![vec![]];
        for k in 1..=n {
            let sets = subsets(n, k);
            minors.push(
                sets.iter()
                    .map(|rows| {
                        sets.iter()
                            .map(|cols| {
                                let sub: Vec<Vec<Poly>> = rows
                                    .iter()
                                    .map(|&r| cols.iter().map(|&c| b[r][c].clone()).collect())
                                    .collect();
                                poly_det(&sub)
                            })
                            .collect()
                    })
                    .collect(),
            );
        }
        Ok(Self { curve, g, flow, t, minors })
    }

    pub fn dim(&self) -> usize {
        self.curve.dim()
    }

    /// `a_t phi(s) g` as a matrix.
    pub fn transform(&self, s: f64) -> Result<DMatrix<f64>> {
        Ok(flow_matrix(&self.flow, self.t)? * self.curve.eval(s) * &self.g)
    }

    /// `s -> ||a_t phi(s) g L||^2` as a polynomial, computed as a sum of
    /// squares of transformed Plücker coordinates.
    pub fn covolume_sq(&self, lattice: &IntegerLattice) -> Poly {
        let n = self.dim();
        let k = lattice.rank();
        let w: Vec<f64> = lattice.plucker().iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
        let weights = &self.flow.weights;
        let mut acc = Poly::zero();
        for (ri, rows) in subsets(n, k).iter().enumerate() {
            let factor = (self.t * rows.iter().map(|&i| weights[i]).sum::<f64>()).exp();
            let mut q = Poly::zero();
            for (ci, &wc) in w.iter().enumerate() {
                if wc != 0.0 {
                    q = q.add(&self.minors[k][ri][ci].scale(wc));
                }
            }
            let q = q.scale(factor);
            acc = acc.add(&q.mul(&q));
        }
        acc
    }

    /// Radius of cells such that the norm of every lattice changes by a
    /// factor in `[1 - kappa, 1 + kappa]` across a cell, with
    /// `kappa = (1 + r)^k - 1` and `r = 0.1`.
    fn cell_width(&self) -> f64 {
        let n = self.dim();
        let e = self.curve.entries();
        let deriv: f64 = e.iter().map(|p| p.derivative().max_abs_on(0.0, 1.0).powi(2)).sum::<f64>().sqrt();
        if deriv == 0.0 {
            return f64::INFINITY;
        }
        let m: Vec<Vec<Poly>> = (0..n).map(|i| (0..n).map(|j| e[i * n + j].clone()).collect()).collect();
        let mut inv = 0.0;
        for i in 0..n {
            for j in 0..n {
                let minor: Vec<Vec<Poly>> = (0..n)
                    .filter(|&r| r != i)
                    .map(|r| (0..n).filter(|&c| c != j).map(|c| m[r][c].clone()).collect())
                    .collect();
                inv += poly_det(&minor).max_abs_on(0.0, 1.0).powi(2);
            }
        }
        let spread = self.flow.expansion_rate() * self.t.abs();
        2.0 * 0.1 / (spread.exp() * deriv * inv.sqrt())
    }
}

/// Connected components of `{s in domain : ||a_t phi(s) g L|| <= threshold}`.
pub fn sublevel_components(
    input: &KmInput,
    lattice: &IntegerLattice,
    threshold: f64,
    domain: Interval,
) -> Result<Vec<Interval>> {
    components_of(&input.covolume_sq(lattice), threshold, domain)
}

fn components_of(p: &Poly, threshold: f64, domain: Interval) -> Result<Vec<Interval>> {
    let comps = p.sublevel_components(threshold * threshold, domain.0, domain.1);
    let bound = p.degree() / 2 + 1;
    if comps.len() > bound.max(1) {
        return Err(LabError::RootIsolationFailure(format!(
            "{} components exceed the degree bound for {:?}",
            comps.len(),
            p.coeffs
        )));
    }
    Ok(comps
        .into_iter()
        .map(|(a, b)| {
            if b - a < TOUCH_WIDTH {
                ((a - TOUCH_WIDTH).max(domain.0), (b + TOUCH_WIDTH).min(domain.1))
            } else {
                (a, b)
            }
        })
        .collect())
}

/// Primitive rank-`k` sublattices whose norm drops to at most one somewhere
/// on `domain`.
fn candidates(input: &KmInput, k: usize, domain: Interval) -> Result<Vec<(IntegerLattice, Poly)>> {
    let h = input.cell_width();
    let len = domain.1 - domain.0;
    let cells = if h.is_finite() { (len / h).ceil().max(1.0) } else { 1.0 };
    if cells > MAX_CELLS as f64 {
        return Err(LabError::EnumerationBudgetExceeded { budget: MAX_CELLS as u64 });
    }
    let cells = cells as usize;
    let kappa = 1.1f64.powi(k as i32) - 1.0;
    let bound = (1.0 + 1e-9) / (1.0 - kappa);
    let transforms: Result<Vec<DMatrix<f64>>> = (0..cells)
        .map(|c| input.transform(domain.0 + len * (c as f64 + 0.5) / cells as f64))
        .collect();
    let found = enumerate_primitive(input.dim(), k, bound, NormKind::Euclidean, &transforms?)?;
    Ok(found
        .into_iter()
        .filter_map(|l| {
            let p = input.covolume_sq(&l);
            (p.min_on(domain.0, domain.1) <= 1.0 + 1e-9).then_some((l, p))
        })
        .collect())
}

fn nested(a: &IntegerLattice, b: &IntegerLattice) -> bool {
    match a.rank().cmp(&b.rank()) {
        Ordering::Less => a.is_sublattice_of(b),
        Ordering::Greater => b.is_sublattice_of(a),
        Ordering::Equal => false,
    }
}

fn compatible(flag: &[IntegerLattice], l: &IntegerLattice) -> bool {
    flag.iter().all(|f| nested(f, l))
}

fn hnf_key(l: &IntegerLattice) -> Vec<Vec<BigInt>> {
    hnf_rows(&l.basis)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagTreeNode {
    pub interval: Interval,
    pub flag: Vec<IntegerLattice>,
    /// The lattice this node added to its parent's flag; `None` at the root.
    pub added: Option<IntegerLattice>,
    pub second_label: Interval,
    pub children: Vec<FlagTreeNode>,
}

impl FlagTreeNode {
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Nodes at depth `level`, with their child-index paths.
    pub fn level(&self, level: usize) -> Vec<(Vec<usize>, &FlagTreeNode)> {
        let mut out = vec![(vec![], self)];
        for _ in 0..level {
            out = out
                .into_iter()
                .flat_map(|(p, n)| {
                    n.children.iter().enumerate().map(move |(i, c)| {
                        let mut q = p.clone();
                        q.push(i);
                        (q, c)
                    })
                })
                .collect();
        }
        out
    }

    fn descendants(&self) -> Vec<&FlagTreeNode> {
        let mut out = Vec::new();
        let mut stack: Vec<&FlagTreeNode> = self.children.iter().collect();
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter());
        }
        out
    }
}

fn contains(outer: Interval, inner: Interval) -> bool {
    outer.0 <= inner.0 + ENDPOINT_TOL && inner.1 <= outer.1 + ENDPOINT_TOL
}

fn meets(a: Interval, b: Interval) -> bool {
    a.0.max(b.0) <= a.1.min(b.1)
}

fn precedes(a: Interval, b: Interval) -> bool {
    a.0 < b.0 && a.1 < b.1
}

/// Fewest intervals with the same union, by the left-to-right sweep that
/// always takes the interval reaching furthest right.
pub fn minimal_cover(intervals: &[Interval]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..intervals.len()).collect();
    order.sort_by(|&a, &b| intervals[a].0.total_cmp(&intervals[b].0));
    let mut chosen = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut frontier = intervals[order[i]].0;
        let mut fresh = true;
        loop {
            let mut best: Option<usize> = None;
            while i < order.len() && intervals[order[i]].0 <= frontier {
                let c = order[i];
                if best.is_none_or(|b| intervals[c].1 > intervals[b].1) {
                    best = Some(c);
                }
                i += 1;
            }
            match best {
                Some(b) if fresh || intervals[b].1 > frontier => {
                    chosen.push(b);
                    frontier = intervals[b].1;
                    fresh = false;
                }
                _ => break,
            }
        }
    }
    chosen.sort_unstable();
    chosen
}

fn second_label(p: &Poly, interval: Interval) -> Result<Interval> {
    let comps = components_of(p, 1.0, (0.0, 1.0))?;
    let mid = 0.5 * (interval.0 + interval.1);
    comps
        .iter()
        .copied()
        .min_by(|a, b| {
            let da = if a.0 <= mid && mid <= a.1 { 0.0 } else { (a.0 - mid).abs().min((a.1 - mid).abs()) };
            let db = if b.0 <= mid && mid <= b.1 { 0.0 } else { (b.0 - mid).abs().min((b.1 - mid).abs()) };
            da.total_cmp(&db)
        })
        .ok_or_else(|| LabError::RootIsolationFailure(format!("no component of {:?} near {interval:?}", p.coeffs)))
}

fn build_children(input: &KmInput, interval: Interval, flag: &[IntegerLattice]) -> Result<Vec<FlagTreeNode>> {
    let n = input.dim();
    let taken: Vec<usize> = flag.iter().map(|f| f.rank()).collect();
    let mut labelled: Vec<(Interval, IntegerLattice, Poly)> = Vec::new();
    for k in 1..n {
        if taken.contains(&k) {
            continue;
        }
        for (l, p) in candidates(input, k, interval)? {
            if !compatible(flag, &l) || flag.contains(&l) {
                continue;
            }
            for c in components_of(&p, 1.0, interval)? {
                labelled.push((c, l.clone(), p.clone()));
            }
        }
    }
    // One representative per distinct interval: the smallest HNF.
    let mut reps: Vec<(Interval, IntegerLattice, Poly)> = Vec::new();
    for (c, l, p) in labelled {
        match reps.iter_mut().find(|r| (r.0 .0 - c.0).abs() <= 1e-12 && (r.0 .1 - c.1).abs() <= 1e-12) {
            Some(r) => {
                if hnf_key(&l) < hnf_key(&r.1) {
                    *r = (c, l, p);
                }
            }
            None => reps.push((c, l, p)),
        }
    }
    let maximal: Vec<(Interval, IntegerLattice, Poly)> = reps
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            !reps.iter().enumerate().any(|(j, o)| {
                *i != j && contains(o.0, r.0) && !(contains(r.0, o.0) && j > *i)
            })
        })
        .map(|(_, r)| r.clone())
        .collect();
    let ivs: Vec<Interval> = maximal.iter().map(|r| r.0).collect();
    let mut kids = Vec::new();
    for idx in minimal_cover(&ivs) {
        let (iv, l, p) = &maximal[idx];
        let mut f = flag.to_vec();
        f.push(l.clone());
        f.sort_by_key(|x| x.rank());
        let j = second_label(p, *iv)?;
        let children = build_children(input, *iv, &f)?;
        kids.push(FlagTreeNode { interval: *iv, flag: f, added: Some(l.clone()), second_label: j, children });
    }
    kids.sort_by(|a, b| {
        a.second_label.0.total_cmp(&b.second_label.0).then(a.second_label.1.total_cmp(&b.second_label.1))
    });
    Ok(kids)
}

/// Maximal flag of primitive sublattices with norm at most one on all of
/// `[0, 1]`. Candidates are taken by rank, larger Plücker vectors first.
pub fn root_flag(input: &KmInput) -> Result<Vec<IntegerLattice>> {
    let n = input.dim();
    let mut flag: Vec<IntegerLattice> = Vec::new();
    for k in 1..n {
        let mut cands: Vec<(IntegerLattice, Poly)> = candidates(input, k, (0.0, 1.0))?
            .into_iter()
            .filter(|(_, p)| p.max_abs_on(0.0, 1.0) <= 1.0 + 1e-9)
            .collect();
        cands.sort_by_key(|c| std::cmp::Reverse(c.0.plucker_canonical()));
        for (l, _) in cands {
            if compatible(&flag, &l) {
                flag.push(l);
            }
        }
    }
    flag.sort_by_key(|x| x.rank());
    Ok(flag)
}

pub fn build_tree(input: &KmInput) -> Result<FlagTreeNode> {
    let flag = root_flag(input)?;
    let children = build_children(input, (0.0, 1.0), &flag)?;
    Ok(FlagTreeNode { interval: (0.0, 1.0), flag, added: None, second_label: (0.0, 1.0), children })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakOrderReport {
    pub ok: bool,
    /// Condition label, node path and a description of the first violation.
    pub violation: Option<(String, Vec<usize>, String)>,
}

pub fn verify_weakly_ordered(root: &FlagTreeNode) -> WeakOrderReport {
    fn visit(v: &FlagTreeNode, path: &mut Vec<usize>) -> Option<(String, Vec<usize>, String)> {
        let kids = &v.children;
        let js: Vec<Interval> = kids.iter().map(|c| c.second_label).collect();
        for i in 1..js.len() {
            if !precedes(js[i - 1], js[i]) {
                return Some(("I".into(), path.clone(), format!("{:?} not before {:?}", js[i - 1], js[i])));
            }
        }
        for i in 1..js.len().saturating_sub(1) {
            if !contains(v.second_label, js[i]) {
                return Some(("II".into(), path.clone(), format!("child {i} {:?} leaves {:?}", js[i], v.second_label)));
            }
        }
        for i in 0..js.len().saturating_sub(2) {
            if meets(js[i], js[i + 2]) {
                return Some(("IV".into(), path.clone(), format!("children {i} and {}", i + 2)));
            }
        }
        for d in v.descendants() {
            if !meets(d.second_label, v.second_label) {
                return Some(("III".into(), path.clone(), format!("descendant {:?}", d.second_label)));
            }
            let hits = js.iter().filter(|j| meets(**j, d.second_label)).count();
            if hits > 3 {
                return Some(("V".into(), path.clone(), format!("descendant {:?} meets {hits}", d.second_label)));
            }
        }
        for (i, c) in kids.iter().enumerate() {
            path.push(i);
            if let Some(v) = visit(c, path) {
                return Some(v);
            }
            path.pop();
        }
        None
    }
    let violation = visit(root, &mut Vec::new());
    WeakOrderReport { ok: violation.is_none(), violation }
}

/// One level of the partition: each cell lists node paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePartition {
    pub level: usize,
    pub cells: Vec<Vec<Vec<usize>>>,
}

/// Children of each cell grouped by their index modulo 6.
pub fn partitions(root: &FlagTreeNode) -> Vec<TreePartition> {
    let mut out = vec![TreePartition { level: 0, cells: vec![vec![vec![]]] }];
    loop {
        let prev = out.last().unwrap();
        let mut cells = Vec::new();
        for cell in &prev.cells {
            for b in 0..6 {
                let mut group = Vec::new();
                for path in cell {
                    let node = node_at(root, path);
                    for i in (b..node.children.len()).step_by(6) {
                        let mut p = path.clone();
                        p.push(i);
                        group.push(p);
                    }
                }
                if !group.is_empty() {
                    cells.push(group);
                }
            }
        }
        if cells.is_empty() {
            return out;
        }
        out.push(TreePartition { level: prev.level + 1, cells });
    }
}

pub fn node_at<'a>(root: &'a FlagTreeNode, path: &[usize]) -> &'a FlagTreeNode {
    path.iter().fold(root, |n, &i| &n.children[i])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverReport {
    pub grid: usize,
    /// Grid points with height above `1/eps`.
    pub violations: usize,
    /// Of those, points outside the bad set.
    pub misses: usize,
    pub first_miss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BadReport {
    pub partitions: Vec<TreePartition>,
    /// Whether every cell has pairwise disjoint second labels.
    pub cells_disjoint: bool,
    pub collection_size: usize,
    pub bad: Vec<Interval>,
    pub cover: CoverReport,
}

/// Partitions, the bad set `{s in J : ||a_t phi(s) g L_J|| <= eps}` over
/// all nodes, and the grid check that every point of height above `1/eps`
/// is bad. Lattices of the root flag contribute with `J = [0, 1]`.
pub fn partitions_and_bad(input: &KmInput, root: &FlagTreeNode, eps: f64, grid: usize) -> Result<BadReport> {
    let parts = partitions(root);
    let mut cells_disjoint = true;
    for part in &parts {
        for cell in &part.cells {
            let js: Vec<Interval> = cell.iter().map(|p| node_at(root, p).second_label).collect();
            for a in 0..js.len() {
                for b in a + 1..js.len() {
                    if meets(js[a], js[b]) {
                        cells_disjoint = false;
                    }
                }
            }
        }
    }
    let mut bad = Vec::new();
    for l in &root.flag {
        bad.extend(sublevel_components(input, l, eps, (0.0, 1.0))?);
    }
    let mut stack: Vec<&FlagTreeNode> = root.children.iter().collect();
    while let Some(n) = stack.pop() {
        if let Some(l) = &n.added {
            bad.extend(sublevel_components(input, l, eps, n.second_label)?);
        }
        stack.extend(n.children.iter());
    }
    bad.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut violations = 0;
    let mut misses = 0;
    let mut first_miss = None;
    for i in 0..grid {
        let s = if grid == 1 { 0.5 } else { i as f64 / (grid - 1) as f64 };
        let basis = UnimodularBasis::new(input.transform(s)?)?;
        let v = shortest_vector(&basis, NormKind::Euclidean, None)?.expect("nonzero lattice");
        if v.length < eps {
            violations += 1;
            if !bad.iter().any(|b| b.0 - 1e-10 <= s && s <= b.1 + 1e-10) {
                misses += 1;
                first_miss.get_or_insert(s);
            }
        }
    }
    Ok(BadReport {
        collection_size: parts.iter().map(|p| p.cells.len()).sum(),
        partitions: parts,
        cells_disjoint,
        bad,
        cover: CoverReport { grid, violations, misses, first_miss },
    })
}

/// A perturbed moment curve in `SL_3`, a nearby `g` and a time, drawn from
/// the given stream.
pub fn random_instance(rng: &mut crate::rng::RngStream, t_max: f64) -> Result<KmInput> {
    let mut psi = Vec::new();
    for k in 1..=2usize {
        let mut c = vec![0.0; 3];
        c[k] = 1.0;
        for x in c.iter_mut() {
            *x += rng.uniform_in(-0.2, 0.2);
        }
        psi.push(Poly::new(c));
    }
    let curve = PolynomialCurve::top_row_graph(psi)?;
    let mut g = DMatrix::from_fn(3, 3, |i, j| if i == j { 1.0 } else { 0.0 } + rng.uniform_in(-0.3, 0.3));
    let det = g.determinant();
    if det < 0.0 {
        g.column_mut(0).neg_mut();
    }
    g /= det.abs().cbrt();
    let t = rng.uniform_in(0.5, t_max);
    KmInput::new(curve, g, FlowSpec::dirichlet_flow(2), t)
}
