//! Structured lattice domains and nodal fields.
//!
//! A [`DomainGrid`] is a uniform Cartesian lattice over a box, optionally
//! restricted by a ball or annulus mask. Nodes are classified interior or
//! boundary; every interior node has all 2n axis neighbors active. Curved
//! domains are approximated by masking alone: nodes adjacent to masked-out
//! cells become boundary nodes carrying Dirichlet data.

use std::io::{BufRead, Write};
use std::sync::Arc;

use crate::{CoreError, Result, MAX_DIM};

/// Default cap on the number of active nodes.
pub const DEFAULT_NODE_CAP: usize = 2_000_000;

const NONE_U32: u32 = u32::MAX;
/// Geometric tolerance for mask membership tests.
const MASK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryMode {
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MaskShape {
    /// Closed ball |x - center| <= radius.
    Ball { center: Vec<f64>, radius: f64 },
    /// Closed annulus r_inner <= |x - center| <= r_outer.
    Annulus {
        center: Vec<f64>,
        r_inner: f64,
        r_outer: f64,
    },
}

impl MaskShape {
    fn contains(&self, x: &[f64]) -> bool {
        match self {
            MaskShape::Ball { center, radius } => {
                dist(x, center) <= radius + MASK_TOL
            }
            MaskShape::Annulus {
                center,
                r_inner,
                r_outer,
            } => {
                let r = dist(x, center);
                r >= r_inner - MASK_TOL && r <= r_outer + MASK_TOL
            }
        }
    }

    fn check_fits(&self, n: usize, lo: &[f64], hi: &[f64]) -> Result<()> {
        let (center, reach) = match self {
            MaskShape::Ball { center, radius } => (center, *radius),
            MaskShape::Annulus {
                center, r_outer, ..
            } => (center, *r_outer),
        };
        if center.len() != n {
            return Err(CoreError::InvalidParameter(format!(
                "mask center has {} coordinates, expected {}",
                center.len(),
                n
            )));
        }
        for i in 0..n {
            if center[i] - reach < lo[i] - MASK_TOL || center[i] + reach > hi[i] + MASK_TOL {
                return Err(CoreError::MaskOutsideBox(i));
            }
        }
        if let MaskShape::Annulus {
            r_inner, r_outer, ..
        } = self
        {
            if !(*r_inner >= 0.0 && r_inner < r_outer) {
                return Err(CoreError::InvalidParameter(
                    "annulus radii must satisfy 0 <= r_inner < r_outer".into(),
                ));
            }
        }
        Ok(())
    }
}

fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
}

/// Uniform structured lattice with node classification.
#[derive(Debug)]
pub struct DomainGrid {
    n: usize,
    lo: [f64; MAX_DIM],
    hi: [f64; MAX_DIM],
    res: [usize; MAX_DIM],
    h: [f64; MAX_DIM],
    mode: BoundaryMode,
    mask: Option<MaskShape>,

    strides: [usize; MAX_DIM],
    lattice_len: usize,
    active_of_lattice: Vec<u32>,
    lattice_of_active: Vec<u32>,
    class: Vec<NodeClass>,
    boundary_slot: Vec<u32>,
    boundary_nodes: Vec<u32>,
    interior_nodes: Vec<u32>,
    /// Central first/second/cross stencils fully inside the active set.
    full_stencil: Vec<bool>,
    /// `2n` entries per node: [axis][minus, plus], NONE_U32 when absent.
    neighbors: Vec<u32>,
    coords: Vec<f64>,
    quad_weight: Vec<f64>,
    diameter: f64,
    cell_volume: f64,
}

/// Builds a grid with the default active-node cap.
pub fn make_grid(
    n: usize,
    boxes: &[(f64, f64)],
    resolution: &[usize],
    mask: Option<MaskShape>,
    mode: BoundaryMode,
) -> Result<Arc<DomainGrid>> {
    make_grid_with_cap(n, boxes, resolution, mask, mode, DEFAULT_NODE_CAP)
}

/// Builds a grid, validating dimensions, resolutions, mask fit and node cap.
pub fn make_grid_with_cap(
    n: usize,
    boxes: &[(f64, f64)],
    resolution: &[usize],
    mask: Option<MaskShape>,
    mode: BoundaryMode,
    cap: usize,
) -> Result<Arc<DomainGrid>> {
    if n < 1 || n > MAX_DIM {
        return Err(CoreError::DimensionOutOfRange(n));
    }
    if boxes.len() != n || resolution.len() != n {
        return Err(CoreError::InvalidParameter(format!(
            "expected {} box intervals and resolutions",
            n
        )));
    }
    if mode == BoundaryMode::Periodic && mask.is_some() {
        return Err(CoreError::PeriodicWithMask);
    }

    let mut lo = [0.0; MAX_DIM];
    let mut hi = [0.0; MAX_DIM];
    let mut res = [1usize; MAX_DIM];
    let mut h = [1.0; MAX_DIM];
    for i in 0..n {
        lo[i] = boxes[i].0;
        hi[i] = boxes[i].1;
        res[i] = resolution[i];
        if res[i] < 3 {
            return Err(CoreError::ResolutionTooSmall(res[i], i));
        }
        if !(hi[i] - lo[i] > 0.0) {
            return Err(CoreError::DegenerateBox(i));
        }
        // On a periodic axis the node at `hi` is identified with the one at
        // `lo`, so the lattice carries res equispaced nodes of pitch
        // (hi-lo)/res instead of the closed-interval pitch (hi-lo)/(res-1).
        h[i] = match mode {
            BoundaryMode::Dirichlet => (hi[i] - lo[i]) / (res[i] - 1) as f64,
            BoundaryMode::Periodic => (hi[i] - lo[i]) / res[i] as f64,
        };
    }
    if let Some(m) = &mask {
        let lo_v: Vec<f64> = lo[..n].to_vec();
        let hi_v: Vec<f64> = hi[..n].to_vec();
        m.check_fits(n, &lo_v, &hi_v)?;
    }

    let mut strides = [0usize; MAX_DIM];
    let mut lattice_len = 1usize;
    for i in (0..n).rev() {
        strides[i] = lattice_len;
        lattice_len = lattice_len
            .checked_mul(res[i])
            .ok_or_else(|| CoreError::InvalidParameter("lattice size overflow".into()))?;
    }

    // Pass 1: active set.
    let mut active_of_lattice = vec![NONE_U32; lattice_len];
    let mut lattice_of_active: Vec<u32> = Vec::new();
    let mut idx = [0usize; MAX_DIM];
    let mut x = [0.0f64; MAX_DIM];
    for lin in 0..lattice_len {
        decode(lin, n, &strides, &mut idx);
        for i in 0..n {
            x[i] = lo[i] + idx[i] as f64 * h[i];
        }
        let inside = match &mask {
            Some(m) => m.contains(&x[..n]),
            None => true,
        };
        if inside {
            if lattice_of_active.len() >= cap {
                return Err(CoreError::TooManyNodes {
                    count: lattice_of_active.len() + 1,
                    cap,
                });
            }
            active_of_lattice[lin] = lattice_of_active.len() as u32;
            lattice_of_active.push(lin as u32);
        }
    }
    let n_active = lattice_of_active.len();
    if n_active == 0 {
        return Err(CoreError::EmptyInterior);
    }

    // Pass 2: neighbors, classification, full-stencil flags, coordinates.
    let mut neighbors = vec![NONE_U32; n_active * 2 * n];
    let mut class = vec![NodeClass::Interior; n_active];
    let mut coords = vec![0.0f64; n_active * n];
    for a in 0..n_active {
        let lin = lattice_of_active[a] as usize;
        decode(lin, n, &strides, &mut idx);
        for i in 0..n {
            coords[a * n + i] = lo[i] + idx[i] as f64 * h[i];
        }
        let mut on_face = false;
        let mut missing_neighbor = false;
        for axis in 0..n {
            for (slot, dir) in [(0usize, -1isize), (1usize, 1isize)] {
                let nb = lattice_step(lin, &idx, axis, dir, n, &res, &strides, mode);
                let nb_active = nb.and_then(|l| {
                    let a2 = active_of_lattice[l];
                    (a2 != NONE_U32).then_some(a2)
                });
                match nb_active {
                    Some(a2) => neighbors[(a * n + axis) * 2 + slot] = a2,
                    None => missing_neighbor = true,
                }
            }
            if mode == BoundaryMode::Dirichlet && (idx[axis] == 0 || idx[axis] == res[axis] - 1) {
                on_face = true;
            }
        }
        class[a] = if mode == BoundaryMode::Periodic {
            NodeClass::Interior
        } else if on_face || missing_neighbor {
            NodeClass::Boundary
        } else {
            NodeClass::Interior
        };
    }

    let mut full_stencil = vec![false; n_active];
    for a in 0..n_active {
        if class[a] == NodeClass::Boundary {
            continue;
        }
        let lin = lattice_of_active[a] as usize;
        decode(lin, n, &strides, &mut idx);
        let mut ok = true;
        'pairs: for i in 0..n {
            for j in i + 1..n {
                for di in [-1isize, 1] {
                    for dj in [-1isize, 1] {
                        let step1 = lattice_step(lin, &idx, i, di, n, &res, &strides, mode);
                        let diag = step1.and_then(|l1| {
                            let mut idx1 = [0usize; MAX_DIM];
                            decode(l1, n, &strides, &mut idx1);
                            lattice_step(l1, &idx1, j, dj, n, &res, &strides, mode)
                        });
                        let active = diag
                            .map(|l| active_of_lattice[l] != NONE_U32)
                            .unwrap_or(false);
                        if !active {
                            ok = false;
                            break 'pairs;
                        }
                    }
                }
            }
        }
        full_stencil[a] = ok;
    }

    let mut boundary_nodes = Vec::new();
    let mut interior_nodes = Vec::new();
    let mut boundary_slot = vec![NONE_U32; n_active];
    for a in 0..n_active {
        match class[a] {
            NodeClass::Boundary => {
                boundary_slot[a] = boundary_nodes.len() as u32;
                boundary_nodes.push(a as u32);
            }
            NodeClass::Interior => interior_nodes.push(a as u32),
        }
    }
    if mode == BoundaryMode::Dirichlet && interior_nodes.is_empty() {
        return Err(CoreError::EmptyInterior);
    }

    // Quadrature weights: tensor-product trapezoid on plain boxes, class
    // based (1 interior / 0.5 boundary) on masked domains, 1 on tori.
    let mut quad_weight = vec![1.0f64; n_active];
    match (mode, &mask) {
        (BoundaryMode::Periodic, _) => {}
        (BoundaryMode::Dirichlet, None) => {
            for a in 0..n_active {
                let lin = lattice_of_active[a] as usize;
                decode(lin, n, &strides, &mut idx);
                let mut w = 1.0;
                for i in 0..n {
                    if idx[i] == 0 || idx[i] == res[i] - 1 {
                        w *= 0.5;
                    }
                }
                quad_weight[a] = w;
            }
        }
        (BoundaryMode::Dirichlet, Some(_)) => {
            for a in 0..n_active {
                if class[a] == NodeClass::Boundary {
                    quad_weight[a] = 0.5;
                }
            }
        }
    }

    let cell_volume: f64 = h[..n].iter().product();

    let diameter = if mask.is_none() {
        let mut s = 0.0;
        for i in 0..n {
            let span = (res[i] - 1) as f64 * h[i];
            s += span * span;
        }
        s.sqrt()
    } else {
        masked_diameter(n, &coords, &boundary_nodes)
    };

    Ok(Arc::new(DomainGrid {
        n,
        lo,
        hi,
        res,
        h,
        mode,
        mask,
        strides,
        lattice_len,
        active_of_lattice,
        lattice_of_active,
        class,
        boundary_slot,
        boundary_nodes,
        interior_nodes,
        full_stencil,
        neighbors,
        coords,
        quad_weight,
        diameter,
        cell_volume,
    }))
}

fn decode(lin: usize, n: usize, strides: &[usize; MAX_DIM], idx: &mut [usize; MAX_DIM]) {
    let mut rem = lin;
    for i in 0..n {
        idx[i] = rem / strides[i];
        rem %= strides[i];
    }
}

#[allow(clippy::too_many_arguments)]
fn lattice_step(
    lin: usize,
    idx: &[usize; MAX_DIM],
    axis: usize,
    dir: isize,
    _n: usize,
    res: &[usize; MAX_DIM],
    strides: &[usize; MAX_DIM],
    mode: BoundaryMode,
) -> Option<usize> {
    let r = res[axis];
    let i = idx[axis] as isize + dir;
    match mode {
        BoundaryMode::Dirichlet => {
            if i < 0 || i as usize >= r {
                None
            } else {
                Some((lin as isize + dir * strides[axis] as isize) as usize)
            }
        }
        BoundaryMode::Periodic => {
            let wrapped = i.rem_euclid(r as isize) as usize;
            Some(lin - idx[axis] * strides[axis] + wrapped * strides[axis])
        }
    }
}

/// Max pairwise distance among boundary nodes, found by scanning extreme
/// nodes along all sign directions and taking the max over candidate pairs.
/// Exact for boxes; a tight lower bound on lattice balls and annuli.
fn masked_diameter(n: usize, coords: &[f64], boundary: &[u32]) -> f64 {
    if boundary.is_empty() {
        return 0.0;
    }
    let mut dirs: Vec<[f64; MAX_DIM]> = Vec::new();
    let count = 3usize.pow(n as u32);
    for code in 0..count {
        let mut d = [0.0; MAX_DIM];
        let mut rem = code;
        let mut nonzero = false;
        for item in d.iter_mut().take(n) {
            let trit = rem % 3;
            rem /= 3;
            *item = (trit as f64) - 1.0;
            if *item != 0.0 {
                nonzero = true;
            }
        }
        if nonzero {
            dirs.push(d);
        }
    }
    let mut candidates: Vec<u32> = Vec::new();
    for d in &dirs {
        let mut best = boundary[0];
        let mut best_dot = f64::NEG_INFINITY;
        for &b in boundary {
            let x = &coords[b as usize * n..b as usize * n + n];
            let dot: f64 = (0..n).map(|i| x[i] * d[i]).sum();
            if dot > best_dot {
                best_dot = dot;
                best = b;
            }
        }
        if !candidates.contains(&best) {
            candidates.push(best);
        }
    }
    let mut diam: f64 = 0.0;
    for (i, &a) in candidates.iter().enumerate() {
        for &b in &candidates[i + 1..] {
            let xa = &coords[a as usize * n..a as usize * n + n];
            let xb = &coords[b as usize * n..b as usize * n + n];
            diam = diam.max(dist(xa, xb));
        }
    }
    diam
}

impl DomainGrid {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn boundary_mode(&self) -> BoundaryMode {
        self.mode
    }

    pub fn mask(&self) -> Option<&MaskShape> {
        self.mask.as_ref()
    }

    pub fn resolution(&self) -> &[usize] {
        &self.res[..self.n]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.h[..self.n]
    }

    pub fn min_spacing(&self) -> f64 {
        self.h[..self.n].iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn box_lo(&self) -> &[f64] {
        &self.lo[..self.n]
    }

    pub fn box_hi(&self) -> &[f64] {
        &self.hi[..self.n]
    }

    pub fn active_count(&self) -> usize {
        self.lattice_of_active.len()
    }

    pub fn interior_nodes(&self) -> &[u32] {
        &self.interior_nodes
    }

    pub fn boundary_nodes(&self) -> &[u32] {
        &self.boundary_nodes
    }

    pub fn class(&self, node: usize) -> NodeClass {
        self.class[node]
    }

    pub fn is_interior(&self, node: usize) -> bool {
        self.class[node] == NodeClass::Interior
    }

    /// Slot of `node` in [`Self::boundary_nodes`], if it is a boundary node.
    pub fn boundary_slot(&self, node: usize) -> Option<usize> {
        let s = self.boundary_slot[node];
        (s != NONE_U32).then_some(s as usize)
    }

    /// True when all central first, second and cross stencils at `node`
    /// stay inside the active set.
    pub fn has_full_stencil(&self, node: usize) -> bool {
        self.full_stencil[node]
    }

    pub fn coords(&self, node: usize) -> &[f64] {
        &self.coords[node * self.n..(node + 1) * self.n]
    }

    /// Axis neighbor in direction `dir` (+1/-1); wraps on periodic grids.
    pub fn neighbor(&self, node: usize, axis: usize, dir: isize) -> Option<usize> {
        let slot = if dir < 0 { 0 } else { 1 };
        let v = self.neighbors[(node * self.n + axis) * 2 + slot];
        (v != NONE_U32).then_some(v as usize)
    }

    /// Index tuple of an active node.
    pub fn index_tuple(&self, node: usize) -> [usize; MAX_DIM] {
        let mut idx = [0usize; MAX_DIM];
        decode(
            self.lattice_of_active[node] as usize,
            self.n,
            &self.strides,
            &mut idx,
        );
        idx
    }

    /// Active node at an index tuple, if active.
    pub fn node_at(&self, idx: &[usize]) -> Option<usize> {
        let mut lin = 0usize;
        for i in 0..self.n {
            if idx[i] >= self.res[i] {
                return None;
            }
            lin += idx[i] * self.strides[i];
        }
        let a = self.active_of_lattice[lin];
        (a != NONE_U32).then_some(a as usize)
    }

    /// Quadrature weight of a node (without the cell volume factor).
    pub fn quad_weight(&self, node: usize) -> f64 {
        self.quad_weight[node]
    }

    /// Product of the axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Max distance between active node coordinates.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn lattice_len(&self) -> usize {
        self.lattice_len
    }

    /// Recomputes the interior/boundary split; used to check idempotence.
    pub fn reclassify(&self) -> Vec<NodeClass> {
        let mut out = vec![NodeClass::Interior; self.active_count()];
        for a in 0..self.active_count() {
            if self.mode == BoundaryMode::Periodic {
                continue;
            }
            let idx = self.index_tuple(a);
            let mut boundary = false;
            for axis in 0..self.n {
                if idx[axis] == 0 || idx[axis] == self.res[axis] - 1 {
                    boundary = true;
                }
                for dir in [-1isize, 1] {
                    if self.neighbor(a, axis, dir).is_none() {
                        boundary = true;
                    }
                }
            }
            if boundary {
                out[a] = NodeClass::Boundary;
            }
        }
        out
    }
}

/// Nodal values of a map u: Ω → ℝᵐ together with its Dirichlet trace.
#[derive(Debug, Clone)]
pub struct GraphField {
    grid: Arc<DomainGrid>,
    m: usize,
    values: Vec<f64>,
    boundary_data: Vec<f64>,
}

impl GraphField {
    /// Samples `f` at every active node; the boundary trace is kept as ψ.
    pub fn sample<F>(grid: &Arc<DomainGrid>, m: usize, f: F) -> Result<GraphField>
    where
        F: Fn(&[f64], &mut [f64]),
    {
        if m == 0 {
            return Err(CoreError::InvalidParameter("codimension m must be >= 1".into()));
        }
        let n_active = grid.active_count();
        let mut values = vec![0.0f64; n_active * m];
        let mut buf = vec![0.0f64; m];
        for a in 0..n_active {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(grid.coords(a), &mut buf);
            for (c, &v) in buf.iter().enumerate() {
                if !v.is_finite() {
                    return Err(CoreError::NonFiniteSample { node: a, component: c });
                }
                values[a * m + c] = v;
            }
        }
        let mut boundary_data = vec![0.0f64; grid.boundary_nodes().len() * m];
        for (slot, &b) in grid.boundary_nodes().iter().enumerate() {
            let b = b as usize;
            boundary_data[slot * m..(slot + 1) * m]
                .copy_from_slice(&values[b * m..(b + 1) * m]);
        }
        Ok(GraphField {
            grid: grid.clone(),
            m,
            values,
            boundary_data,
        })
    }

    /// Zero field with zero boundary data.
    pub fn zeros(grid: &Arc<DomainGrid>, m: usize) -> GraphField {
        GraphField {
            grid: grid.clone(),
            m,
            values: vec![0.0; grid.active_count() * m],
            boundary_data: vec![0.0; grid.boundary_nodes().len() * m],
        }
    }

    pub fn grid(&self) -> &Arc<DomainGrid> {
        &self.grid
    }

    pub fn codim(&self) -> usize {
        self.m
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.m..(node + 1) * self.m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn boundary_data(&self) -> &[f64] {
        &self.boundary_data
    }

    /// ψ at a boundary node (by its slot in `boundary_nodes`).
    pub fn boundary_value(&self, slot: usize) -> &[f64] {
        &self.boundary_data[slot * self.m..(slot + 1) * self.m]
    }

    /// Overwrites the stored Dirichlet trace with the current nodal values.
    pub fn refresh_boundary_data(&mut self) {
        for (slot, &b) in self.grid.boundary_nodes().iter().enumerate() {
            let b = b as usize;
            for c in 0..self.m {
                self.boundary_data[slot * self.m + c] = self.values[b * self.m + c];
            }
        }
    }

    /// Re-pins nodal values at boundary nodes to the stored Dirichlet data.
    pub fn pin_boundary(&mut self) {
        for (slot, &b) in self.grid.boundary_nodes().iter().enumerate() {
            let b = b as usize;
            for c in 0..self.m {
                self.values[b * self.m + c] = self.boundary_data[slot * self.m + c];
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Max Frobenius distance to another field on the same grid.
    pub fn max_diff(&self, other: &GraphField) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Writes the snapshot CSV: `i1,...,in,x1,...,xn,u1,...,um`, one row per
    /// active node in lexicographic node order, 17 significant digits.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> Result<()> {
        let n = self.grid.dim();
        let mut header = String::new();
        for i in 1..=n {
            header.push_str(&format!("i{},", i));
        }
        for i in 1..=n {
            header.push_str(&format!("x{},", i));
        }
        for c in 1..=self.m {
            header.push_str(&format!("u{}", c));
            if c < self.m {
                header.push(',');
            }
        }
        writeln!(w, "{}", header)?;
        for a in 0..self.grid.active_count() {
            let idx = self.grid.index_tuple(a);
            let x = self.grid.coords(a);
            let mut row = String::new();
            for &i in idx.iter().take(n) {
                row.push_str(&format!("{},", i));
            }
            for &xi in x.iter().take(n) {
                row.push_str(&crate::fmt_f64(xi));
                row.push(',');
            }
            for c in 0..self.m {
                row.push_str(&crate::fmt_f64(self.value(a)[c]));
                if c + 1 < self.m {
                    row.push(',');
                }
            }
            writeln!(w, "{}", row)?;
        }
        Ok(())
    }

    /// Reads a snapshot written by [`Self::write_snapshot`] back onto `grid`.
    /// The node set must match exactly.
    pub fn read_snapshot<R: BufRead>(grid: &Arc<DomainGrid>, r: &mut R) -> Result<GraphField> {
        let n = grid.dim();
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::SnapshotFormat("empty snapshot".into()))??;
        let cols: Vec<&str> = header.trim().split(',').collect();
        let m = cols
            .iter()
            .filter(|c| c.starts_with('u'))
            .count();
        let n_file = cols.iter().filter(|c| c.starts_with('i')).count();
        if n_file != n || m == 0 || cols.len() != 2 * n + m {
            return Err(CoreError::SnapshotFormat(format!(
                "header '{}' does not match an n={} snapshot",
                header, n
            )));
        }
        let mut values = vec![0.0f64; grid.active_count() * m];
        let mut row_count = 0usize;
        for (a, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            if a >= grid.active_count() {
                return Err(CoreError::SnapshotFormat("too many rows".into()));
            }
            let parts: Vec<&str> = line.trim().split(',').collect();
            if parts.len() != 2 * n + m {
                return Err(CoreError::SnapshotFormat(format!(
                    "row {} has {} fields, expected {}",
                    a,
                    parts.len(),
                    2 * n + m
                )));
            }
            let idx = grid.index_tuple(a);
            for i in 0..n {
                let file_idx: usize = parts[i]
                    .parse()
                    .map_err(|_| CoreError::SnapshotFormat(format!("bad index in row {}", a)))?;
                if file_idx != idx[i] {
                    return Err(CoreError::SnapshotFormat(format!(
                        "row {} index mismatch: grid and snapshot node sets differ",
                        a
                    )));
                }
            }
            for c in 0..m {
                let v: f64 = parts[2 * n + c]
                    .parse()
                    .map_err(|_| CoreError::SnapshotFormat(format!("bad value in row {}", a)))?;
                values[a * m + c] = v;
            }
            row_count += 1;
        }
        if row_count != grid.active_count() {
            return Err(CoreError::SnapshotFormat(format!(
                "snapshot has {} rows, grid has {} active nodes",
                row_count,
                grid.active_count()
            )));
        }
        let mut field = GraphField {
            grid: grid.clone(),
            m,
            values,
            boundary_data: vec![0.0; grid.boundary_nodes().len() * m],
        };
        field.refresh_boundary_data();
        Ok(field)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_legal_grid() {
        let g = make_grid(1, &[(0.0, 1.0)], &[3], None, BoundaryMode::Dirichlet).unwrap();
        assert_eq!(g.active_count(), 3);
        assert_eq!(g.interior_nodes(), &[1]);
        assert_eq!(g.boundary_nodes(), &[0, 2]);
        assert!((g.spacing()[0] - 0.5).abs() < 1e-15);
        assert!((g.diameter() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dimension_and_resolution_validation() {
        assert!(make_grid(0, &[], &[], None, BoundaryMode::Dirichlet).is_err());
        assert!(make_grid(5, &[(0.0, 1.0); 5], &[5; 5], None, BoundaryMode::Dirichlet).is_err());
        assert!(make_grid(1, &[(0.0, 1.0)], &[2], None, BoundaryMode::Dirichlet).is_err());
        assert!(make_grid(1, &[(1.0, 0.0)], &[3], None, BoundaryMode::Dirichlet).is_err());
    }

    #[test]
    fn periodic_with_mask_rejected() {
        let mask = MaskShape::Ball {
            center: vec![0.0, 0.0],
            radius: 0.5,
        };
        let err = make_grid(
            2,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &[8, 8],
            Some(mask),
            BoundaryMode::Periodic,
        );
        assert!(matches!(err, Err(CoreError::PeriodicWithMask)));
    }

    #[test]
    fn ball_mask_excludes_corners() {
        let mask = MaskShape::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let g = make_grid(
            2,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &[5, 5],
            Some(mask),
            BoundaryMode::Dirichlet,
        )
        .unwrap();
        // every node with |x| > 1 is excluded: the 4 corners (|x| = √2) and
        // the 8 nodes like (±1, ±0.5) (|x| ≈ 1.118); 13 nodes remain
        assert_eq!(g.active_count(), 13);
        assert!(g.node_at(&[0, 0]).is_none());
        assert!(g.node_at(&[0, 1]).is_none());
        assert!(g.node_at(&[0, 2]).is_some(), "(−1, 0) lies on the sphere");
        // interior = the plus-shaped block whose axis neighbors are all active
        let expect: Vec<u32> = [[1, 2], [2, 1], [2, 2], [2, 3], [3, 2]]
            .iter()
            .map(|idx| g.node_at(idx).unwrap() as u32)
            .collect();
        assert_eq!(g.interior_nodes(), &expect[..]);
    }

    #[test]
    fn annulus_4d_count_matches_brute_force() {
        let mask = MaskShape::Annulus {
            center: vec![0.0; 4],
            r_inner: 0.25,
            r_outer: 1.0,
        };
        let g = make_grid(
            4,
            &[(-1.0, 1.0); 4],
            &[9; 4],
            Some(mask.clone()),
            BoundaryMode::Dirichlet,
        )
        .unwrap();
        // Brute-force enumeration oracle over all lattice points.
        let mut count = 0usize;
        let h = 2.0 / 8.0;
        let mut origin_included = false;
        for i0 in 0..9 {
            for i1 in 0..9 {
                for i2 in 0..9 {
                    for i3 in 0..9 {
                        let x = [
                            -1.0 + i0 as f64 * h,
                            -1.0 + i1 as f64 * h,
                            -1.0 + i2 as f64 * h,
                            -1.0 + i3 as f64 * h,
                        ];
                        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if r >= 0.25 - 1e-12 && r <= 1.0 + 1e-12 {
                            count += 1;
                            if r == 0.0 {
                                origin_included = true;
                            }
                        }
                    }
                }
            }
        }
        assert!(!origin_included);
        assert_eq!(g.active_count(), count);
        assert!(g.node_at(&[4, 4, 4, 4]).is_none(), "origin excluded");
    }

    #[test]
    fn classification_is_idempotent() {
        let mask = MaskShape::Ball {
            center: vec![0.0, 0.0],
            radius: 1.0,
        };
        let g = make_grid(
            2,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &[9, 9],
            Some(mask),
            BoundaryMode::Dirichlet,
        )
        .unwrap();
        let again = g.reclassify();
        for a in 0..g.active_count() {
            assert_eq!(g.class(a), again[a]);
        }
        // Every interior node has all 2n axis neighbors active.
        for &a in g.interior_nodes() {
            for axis in 0..2 {
                for dir in [-1, 1] {
                    assert!(g.neighbor(a as usize, axis, dir).is_some());
                }
            }
        }
    }

    #[test]
    fn periodic_wraps_and_has_no_boundary() {
        let g = make_grid(2, &[(0.0, 1.0), (0.0, 1.0)], &[8, 8], None, BoundaryMode::Periodic)
            .unwrap();
        assert_eq!(g.boundary_nodes().len(), 0);
        assert_eq!(g.active_count(), 64);
        assert!((g.spacing()[0] - 0.125).abs() < 1e-15);
        for axis in 0..2 {
            // +step from the last node along `axis` lands on the first.
            let mut idx = [0usize; 2];
            idx[axis] = 7;
            let last = g.node_at(&idx).unwrap();
            let first = g.node_at(&[0, 0]).unwrap();
            assert_eq!(g.neighbor(last, axis, 1), Some(first));
            assert_eq!(g.neighbor(first, axis, -1), Some(last));
        }
    }

    #[test]
    fn trapezoid_weights_integrate_constants_exactly() {
        let g = make_grid(2, &[(0.0, 1.0), (0.0, 2.0)], &[33, 17], None, BoundaryMode::Dirichlet)
            .unwrap();
        let total: f64 = (0..g.active_count()).map(|a| g.quad_weight(a)).sum();
        assert!((total * g.cell_volume() - 2.0).abs() < 1e-12);

        let gp = make_grid(1, &[(0.0, 1.0)], &[16], None, BoundaryMode::Periodic).unwrap();
        let total: f64 = (0..gp.active_count()).map(|a| gp.quad_weight(a)).sum();
        assert!((total * gp.cell_volume() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sample_and_snapshot_roundtrip() {
        let g = make_grid(2, &[(0.0, 1.0), (0.0, 1.0)], &[5, 5], None, BoundaryMode::Dirichlet)
            .unwrap();
        let f = GraphField::sample(&g, 2, |x, u| {
            u[0] = x[0] * x[1];
            u[1] = x[0] - 3.0 * x[1];
        })
        .unwrap();
        let mut buf = Vec::new();
        f.write_snapshot(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("i1,i2,x1,x2,u1,u2\n"));
        let mut rd = std::io::BufReader::new(&buf[..]);
        let f2 = GraphField::read_snapshot(&g, &mut rd).unwrap();
        assert_eq!(f.max_diff(&f2), 0.0);
        // Dirichlet invariant: boundary values equal boundary data exactly.
        for (slot, &b) in g.boundary_nodes().iter().enumerate() {
            assert_eq!(f.value(b as usize), f.boundary_value(slot));
        }
    }

    #[test]
    fn non_finite_sample_rejected() {
        let g = make_grid(1, &[(0.0, 1.0)], &[3], None, BoundaryMode::Dirichlet).unwrap();
        let r = GraphField::sample(&g, 1, |x, u| {
            u[0] = 1.0 / (x[0] - 0.5);
        });
        assert!(matches!(r, Err(CoreError::NonFiniteSample { .. })));
    }

    #[test]
    fn node_cap_enforced() {
        let r = make_grid_with_cap(
            2,
            &[(0.0, 1.0), (0.0, 1.0)],
            &[100, 100],
            None,
            BoundaryMode::Dirichlet,
            5_000,
        );
        assert!(matches!(r, Err(CoreError::TooManyNodes { .. })));
    }

    #[test]
    fn affine_sampling_is_exact() {
        let g = make_grid(2, &[(-1.0, 1.0), (0.0, 2.0)], &[9, 9], None, BoundaryMode::Dirichlet)
            .unwrap();
        let f = GraphField::sample(&g, 1, |x, u| {
            u[0] = 2.0 * x[0] - 0.5 * x[1] + 0.25;
        })
        .unwrap();
        for a in 0..g.active_count() {
            let x = g.coords(a);
            assert_eq!(f.value(a)[0], 2.0 * x[0] - 0.5 * x[1] + 0.25);
        }
    }
}
