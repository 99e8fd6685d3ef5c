//! Weak-form candidate library.
//!
//! Every row integrates the candidate terms against a compactly supported
//! polynomial bump on a random subdomain. Derivatives are moved onto the
//! bump by integration by parts wherever the term is an exact derivative;
//! the remaining product-rule factors are differentiated numerically.

pub mod fd;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::seed;
use crate::stats;

const STATE_NAMES: [&str; 2] = ["u", "v"];
const AXIS_NAMES: [&str; 2] = ["x", "y"];

/// A single derivative factor `∂^order_axis (state)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DerivativeFactor {
    pub state: usize,
    pub axis: usize,
    pub order: u32,
}

/// Candidate term: a state monomial times at most one derivative factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermDescriptor {
    /// Degree of each state variable in the monomial multiplier.
    pub poly_degrees: Vec<u32>,
    /// Derivative order along each space axis (at most one is nonzero).
    pub deriv_orders: Vec<u32>,
    /// Differentiated state variable, if any.
    pub deriv_state: Option<usize>,
    pub label: String,
}

impl TermDescriptor {
    fn new(poly: Vec<u32>, deriv: Option<DerivativeFactor>, n_axes: usize) -> Self {
        let mut orders = vec![0; n_axes];
        if let Some(d) = deriv {
            orders[d.axis] = d.order;
        }
        let label = make_label(&poly, deriv);
        TermDescriptor { poly_degrees: poly, deriv_orders: orders, deriv_state: deriv.map(|d| d.state), label }
    }

    /// The derivative factor, if present.
    pub fn derivative(&self) -> Option<DerivativeFactor> {
        let state = self.deriv_state?;
        let (axis, &order) = self.deriv_orders.iter().enumerate().find(|(_, &o)| o > 0)?;
        Some(DerivativeFactor { state, axis, order })
    }

    /// Polynomial degree of the whole term. Every state factor of a product
    /// counts; a bare derivative term has degree 0.
    pub fn poly_degree(&self) -> u32 {
        let multiplier: u32 = self.poly_degrees.iter().sum();
        match self.derivative() {
            Some(_) if multiplier > 0 => multiplier + 1,
            Some(_) => 0,
            None => multiplier,
        }
    }

    /// Total derivative order.
    pub fn deriv_order(&self) -> u32 {
        self.deriv_orders.iter().sum()
    }
}

impl fmt::Display for TermDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

/// Structural complexity: polynomial degree + derivative order + 1.
pub fn structural_complexity(term: &TermDescriptor) -> u32 {
    term.poly_degree() + term.deriv_order() + 1
}

fn make_label(poly: &[u32], deriv: Option<DerivativeFactor>) -> String {
    let mut parts: Vec<String> = poly
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0)
        .map(|(s, &d)| if d == 1 { STATE_NAMES[s].to_string() } else { format!("{}^{d}", STATE_NAMES[s]) })
        .collect();
    if let Some(d) = deriv {
        parts.push(format!("{}_{}", STATE_NAMES[d.state], AXIS_NAMES[d.axis].repeat(d.order as usize)));
    }
    if parts.is_empty() {
        "1".into()
    } else {
        parts.join(" ")
    }
}

/// All exponent vectors over `n_state` variables with total degree ≤ `max_poly`,
/// ordered by degree then lexicographically (highest power of `u` first).
fn monomials(n_state: usize, max_poly: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    for deg in 0..=max_poly {
        if n_state == 1 {
            out.push(vec![deg]);
        } else {
            for a in (0..=deg).rev() {
                out.push(vec![a, deg - a]);
            }
        }
    }
    out
}

/// Enumerate the candidate terms for the given caps.
pub fn enumerate_terms(n_state: usize, n_axes: usize, max_poly: u32, max_deriv: u32) -> Vec<TermDescriptor> {
    let monos = monomials(n_state, max_poly);
    let mut terms: Vec<TermDescriptor> = monos.iter().map(|m| TermDescriptor::new(m.clone(), None, n_axes)).collect();
    for state in 0..n_state {
        for axis in 0..n_axes {
            for order in 1..=max_deriv {
                let d = DerivativeFactor { state, axis, order };
                for m in &monos {
                    terms.push(TermDescriptor::new(m.clone(), Some(d), n_axes));
                }
            }
        }
    }
    terms
}

/// Closed-form term count: monomials × (1 + derivative factors).
pub fn term_count(n_state: usize, n_axes: usize, max_poly: u32, max_deriv: u32) -> usize {
    let monos = stats::binomial(max_poly as usize + n_state, n_state) as usize;
    monos * (1 + n_state * n_axes * max_deriv as usize)
}

/// Integration box on the grid: centre index and half-width (in cells) per
/// dimension, space axes first and time last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub centre: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub centre_index: Vec<usize>,
    pub half_cells: Vec<usize>,
}

/// Draw `n_domains` boxes with uniformly random interior centres.
pub fn sample_subdomains(field: &Field, n_domains: usize, half_width_cells: &[usize], seed: u64) -> Result<Vec<Subdomain>> {
    let shape = field.shape();
    if half_width_cells.len() != shape.len() {
        return Err(Error::Config(format!("need {} half-widths (space axes then time), got {}", shape.len(), half_width_cells.len())));
    }
    if n_domains == 0 {
        return Err(Error::Config("n_domains must be at least 1".into()));
    }
    for (d, (&n, &h)) in shape.iter().zip(half_width_cells).enumerate() {
        if h == 0 || 2 * h + 1 > n {
            return Err(Error::Config(format!("half-width {h} on dimension {d} does not fit an axis of {n} points")));
        }
    }
    let mut axes: Vec<_> = field.space_axes().to_vec();
    axes.push(*field.time_axis());
    let mut rng = seed::rng(seed);
    Ok((0..n_domains)
        .map(|_| {
            let centre_index: Vec<usize> = shape.iter().zip(half_width_cells).map(|(&n, &h)| rng.random_range(h..=n - 1 - h)).collect();
            Subdomain {
                centre: centre_index.iter().zip(&axes).map(|(&i, a)| a.point(i)).collect(),
                half_widths: half_width_cells.iter().zip(&axes).map(|(&h, a)| h as f64 * a.step()).collect(),
                centre_index,
                half_cells: half_width_cells.to_vec(),
            }
        })
        .collect())
}

/// Weak-form regression problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateLibrary {
    /// Standardised design (unit-norm columns).
    pub design: DMatrix<f64>,
    pub responses: Vec<DVector<f64>>,
    pub response_labels: Vec<String>,
    pub terms: Vec<TermDescriptor>,
    /// `raw = design × diag(column_scales)`.
    pub column_scales: Vec<f64>,
    pub subdomain_seed: u64,
}

impl CandidateLibrary {
    /// Library over an arbitrary design: columns are scaled to unit norm and
    /// terms carry only their labels (structural complexity 1).
    pub fn from_design(design: DMatrix<f64>, responses: Vec<DVector<f64>>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != design.ncols() {
            return Err(Error::Config(format!("{} labels for {} columns", labels.len(), design.ncols())));
        }
        if responses.is_empty() || responses.iter().any(|y| y.len() != design.nrows()) {
            return Err(Error::Config("responses must match the design's rows".into()));
        }
        let zero: Vec<String> = design.column_iter().zip(&labels).filter(|(c, _)| c.norm() == 0.0).map(|(_, l)| l.clone()).collect();
        if !zero.is_empty() {
            return Err(Error::ZeroColumns(zero));
        }
        let column_scales: Vec<f64> = design.column_iter().map(|c| c.norm()).collect();
        let mut scaled = design;
        for (j, s) in column_scales.iter().enumerate() {
            scaled.column_mut(j).unscale_mut(*s);
        }
        let response_labels = (0..responses.len()).map(|r| format!("y{r}")).collect();
        let terms = labels
            .into_iter()
            .map(|label| TermDescriptor { poly_degrees: Vec::new(), deriv_orders: Vec::new(), deriv_state: None, label })
            .collect();
        Ok(CandidateLibrary { design: scaled, responses, response_labels, terms, column_scales, subdomain_seed: 0 })
    }

    pub fn n_rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn n_terms(&self) -> usize {
        self.design.ncols()
    }

    /// Unstandardised design.
    pub fn raw_design(&self) -> DMatrix<f64> {
        let mut raw = self.design.clone();
        for (j, s) in self.column_scales.iter().enumerate() {
            raw.column_mut(j).scale_mut(*s);
        }
        raw
    }

    /// Index of a term by label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    /// Labels of a set of term indices.
    pub fn labels(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&j| self.terms[j].label.clone()).collect()
    }

    /// Map standardised-scale coefficients on `support` back to raw scale.
    pub fn to_raw(&self, support: &[usize], coefficients: &[f64]) -> Vec<f64> {
        support.iter().zip(coefficients).map(|(&j, c)| c / self.column_scales[j]).collect()
    }

    /// Restrict to a subset of columns (order preserved as given).
    pub fn restrict(&self, support: &[usize]) -> CandidateLibrary {
        CandidateLibrary {
            design: crate::linalg::columns(&self.design, support),
            responses: self.responses.clone(),
            response_labels: self.response_labels.clone(),
            terms: support.iter().map(|&j| self.terms[j].clone()).collect(),
            column_scales: support.iter().map(|&j| self.column_scales[j]).collect(),
            subdomain_seed: self.subdomain_seed,
        }
    }

    /// Export as `<stem>.csv` (responses then standardised columns) and
    /// `<stem>.json` (term descriptors and scales).
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(fs::File::create(stem.with_extension("csv"))?);
        let header: Vec<&str> =
            self.response_labels.iter().map(String::as_str).chain(self.terms.iter().map(|t| t.label.as_str())).collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.n_rows() {
            let row: Vec<String> = self
                .responses
                .iter()
                .map(|r| r[i].to_string())
                .chain((0..self.n_terms()).map(|j| self.design[(i, j)].to_string()))
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        let manifest = Manifest {
            response_labels: self.response_labels.clone(),
            terms: self.terms.clone(),
            column_scales: self.column_scales.clone(),
            n_rows: self.n_rows(),
            subdomain_seed: self.subdomain_seed,
        };
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }

    /// Load a library written by [`CandidateLibrary::save`].
    pub fn load(stem: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        let text = fs::read_to_string(stem.with_extension("csv"))?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Config("library CSV is empty".into()))?;
        let r = manifest.response_labels.len();
        let p = manifest.terms.len();
        if header.split(',').count() != r + p {
            return Err(Error::Config("library CSV header does not match the manifest".into()));
        }
        let n = manifest.n_rows;
        let mut design = DMatrix::zeros(n, p);
        let mut responses = vec![DVector::zeros(n); r];
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            if i >= n {
                return Err(Error::Config("library CSV has more rows than declared".into()));
            }
            for (k, cell) in line.split(',').enumerate() {
                let v: f64 = cell.trim().parse().map_err(|_| Error::Config(format!("bad number `{cell}` on library row {}", i + 1)))?;
                if k < r {
                    responses[k][i] = v;
                } else {
                    design[(i, k - r)] = v;
                }
            }
            rows += 1;
        }
        if rows != n {
            return Err(Error::Config(format!("library CSV has {rows} rows, manifest declares {n}")));
        }
        Ok(CandidateLibrary {
            design,
            responses,
            response_labels: manifest.response_labels,
            terms: manifest.terms,
            column_scales: manifest.column_scales,
            subdomain_seed: manifest.subdomain_seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    response_labels: Vec<String>,
    terms: Vec<TermDescriptor>,
    column_scales: Vec<f64>,
    n_rows: usize,
    subdomain_seed: u64,
}

/// Extra vanishing orders of the test function beyond the highest
/// transferred derivative. Each transferred derivative `∂^k w` then vanishes
/// to order ≥ 4 at the box edge, which keeps the trapezoid rule's endpoint
/// error negligible.
pub const TEST_FUNCTION_MARGIN: u32 = 4;

/// Exponent `m` of the test function `Π(1 − s²)^m` for a derivative cap.
pub fn test_function_power(max_deriv: u32) -> u32 {
    max_deriv + TEST_FUNCTION_MARGIN
}

/// Coefficients of `(1 − s²)^m` as a polynomial in `s` (ascending powers).
fn bump_polynomial(m: u32) -> Vec<f64> {
    let mut c = vec![0.0; 2 * m as usize + 1];
    for j in 0..=m as usize {
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        c[2 * j] = sign * stats::binomial(m as usize, j) as f64;
    }
    c
}

fn differentiate(poly: &[f64]) -> Vec<f64> {
    poly.iter().enumerate().skip(1).map(|(k, c)| k as f64 * c).collect()
}

fn horner(poly: &[f64], s: f64) -> f64 {
    poly.iter().rev().fold(0.0, |acc, c| acc * s + c)
}

/// Quadrature weights `trap_i · h · ∂^k φ(x_i)` on one axis of a subdomain.
fn axis_weights(derivs: &[Vec<f64>], half_cells: usize, step: f64) -> Vec<Vec<f64>> {
    let width = half_cells as f64 * step;
    derivs
        .iter()
        .enumerate()
        .map(|(k, poly)| {
            let chain = width.powi(-(k as i32));
            (0..=2 * half_cells)
                .map(|i| {
                    let s = (i as f64 - half_cells as f64) / half_cells as f64;
                    let trap = if i == 0 || i == 2 * half_cells { 0.5 } else { 1.0 };
                    trap * step * chain * horner(poly, s)
                })
                .collect()
        })
        .collect()
}

/// One integrand of the weak form: `∫ ∂^order_dim(w) · data`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Piece {
    data: usize,
    dim: usize,
    order: u32,
}

/// Registry of grid arrays sampled by the weak form.
struct Arrays {
    store: Vec<Vec<f64>>,
    keys: HashMap<String, usize>,
}

impl Arrays {
    fn intern(&mut self, key: String, make: impl FnOnce() -> Vec<f64>) -> usize {
        if let Some(&i) = self.keys.get(&key) {
            return i;
        }
        self.store.push(make());
        self.keys.insert(key, self.store.len() - 1);
        self.store.len() - 1
    }
}

/// Assemble the weak-form library from one or two fields on a shared grid.
pub fn build_library(
    fields: &[&Field],
    max_poly: u32,
    max_deriv: u32,
    subdomains: &[Subdomain],
    subdomain_seed: u64,
) -> Result<CandidateLibrary> {
    if fields.is_empty() || fields.len() > 2 {
        return Err(Error::Config(format!("need one or two fields, got {}", fields.len())));
    }
    if fields.iter().any(|f| !f.same_grid(fields[0])) {
        return Err(Error::Config("fields must share a grid".into()));
    }
    if max_poly < 1 || max_deriv < 1 {
        return Err(Error::Config("max_poly and max_deriv must both be ≥ 1".into()));
    }
    if subdomains.is_empty() {
        return Err(Error::Config("no subdomains supplied".into()));
    }
    let base = fields[0];
    let shape = base.shape();
    let n_axes = base.space_axes().len();
    let time_dim = n_axes;
    let n_state = fields.len();
    let bump_power = test_function_power(max_deriv);
    let mut steps: Vec<f64> = base.space_axes().iter().map(|a| a.step()).collect();
    steps.push(base.time_axis().step());
    let periodic: Vec<bool> = base.space_axes().iter().map(|a| a.periodic).collect();
    for sd in subdomains {
        if sd.centre_index.len() != shape.len()
            || sd.centre_index.iter().zip(&sd.half_cells).zip(&shape).any(|((&c, &h), &n)| c < h || c + h >= n)
        {
            return Err(Error::Config("subdomain does not fit inside the field".into()));
        }
    }

    let terms = enumerate_terms(n_state, n_axes, max_poly, max_deriv);
    let state_values: Vec<&[f64]> = fields.iter().map(|f| f.values()).collect();
    let monomial = |deg: &[u32]| -> Vec<f64> {
        (0..state_values[0].len()).map(|i| deg.iter().zip(&state_values).map(|(&d, v)| v[i].powi(d as i32)).product()).collect()
    };
    let mut arrays = Arrays { store: Vec::new(), keys: HashMap::new() };

    // Each column is a signed sum of pieces.
    let mut recipes: Vec<Vec<(f64, Piece)>> = Vec::with_capacity(terms.len());
    for term in &terms {
        let g = &term.poly_degrees;
        let g_deg: u32 = g.iter().sum();
        let recipe = match term.derivative() {
            None => {
                let data = arrays.intern(format!("{g:?}"), || monomial(g));
                vec![(1.0, Piece { data, dim: time_dim, order: 0 })]
            }
            Some(d) if g_deg == 0 => {
                let mut e = vec![0; n_state];
                e[d.state] = 1;
                let data = arrays.intern(format!("{e:?}"), || monomial(&e));
                let sign = if d.order % 2 == 0 { 1.0 } else { -1.0 };
                vec![(sign, Piece { data, dim: d.axis, order: d.order })]
            }
            Some(d) if d.order == 1 && g_deg == g[d.state] => {
                // u^b u_x = (u^{b+1})_x / (b+1)
                let b = g[d.state];
                let mut e = vec![0; n_state];
                e[d.state] = b + 1;
                let data = arrays.intern(format!("{e:?}"), || monomial(&e));
                vec![(-1.0 / (b + 1) as f64, Piece { data, dim: d.axis, order: 1 })]
            }
            Some(d) => {
                // ∫ w g ∂^m u = (−1)^m Σ_k C(m,k) ∫ ∂^{m−k} w · ∂^k g · u
                let m = d.order;
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let mut pieces = Vec::new();
                for k in 0..=m {
                    let key = format!("{g:?}|d{}^{k}|s{}", d.axis, d.state);
                    let data = arrays.intern(key, || {
                        let gv = monomial(g);
                        let dg = if periodic[d.axis] {
                            fd::spectral_derivative(&gv, &shape, d.axis, k as usize, steps[d.axis])
                        } else {
                            fd::derivative(&gv, &shape, d.axis, k as usize, steps[d.axis], false)
                        };
                        dg.iter().zip(state_values[d.state]).map(|(a, b)| a * b).collect()
                    });
                    let c = sign * stats::binomial(m as usize, k as usize) as f64;
                    pieces.push((c, Piece { data, dim: d.axis, order: m - k }));
                }
                pieces
            }
        };
        recipes.push(recipe);
    }
    // Responses: ∫ w u_t = −∫ w_t u.
    let response_pieces: Vec<Piece> = (0..n_state)
        .map(|s| {
            let mut e = vec![0; n_state];
            e[s] = 1;
            let data = arrays.intern(format!("{e:?}"), || monomial(&e));
            Piece { data, dim: time_dim, order: 1 }
        })
        .collect();

    // Bump derivatives as polynomials in the local coordinate.
    let mut bump = vec![bump_polynomial(bump_power)];
    for _ in 0..max_deriv {
        let next = differentiate(bump.last().expect("non-empty"));
        bump.push(next);
    }

    let rows = assemble_rows(&arrays.store, &recipes, &response_pieces, subdomains, &shape, &steps, &bump);
    let n = subdomains.len();
    let p = terms.len();
    let mut design = DMatrix::zeros(n, p);
    let mut responses = vec![DVector::zeros(n); n_state];
    for (i, (row, resp)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            design[(i, j)] = v;
        }
        for (s, v) in resp.into_iter().enumerate() {
            responses[s][i] = -v;
        }
    }

    let mut scales = Vec::with_capacity(p);
    let mut zero = Vec::new();
    for (j, term) in terms.iter().enumerate() {
        let norm = design.column(j).norm();
        if norm == 0.0 || !norm.is_finite() {
            zero.push(term.label.clone());
        }
        scales.push(norm);
    }
    if !zero.is_empty() {
        return Err(Error::ZeroColumns(zero));
    }
    for (j, s) in scales.iter().enumerate() {
        design.column_mut(j).unscale_mut(*s);
    }
    Ok(CandidateLibrary {
        design,
        responses,
        response_labels: (0..n_state).map(|s| format!("{}_t", STATE_NAMES[s])).collect(),
        terms,
        column_scales: scales,
        subdomain_seed,
    })
}

type Row = (Vec<f64>, Vec<f64>);

fn assemble_rows(
    arrays: &[Vec<f64>],
    recipes: &[Vec<(f64, Piece)>],
    responses: &[Piece],
    subdomains: &[Subdomain],
    shape: &[usize],
    steps: &[f64],
    bump: &[Vec<f64>],
) -> Vec<Row> {
    let one = |sd: &Subdomain| -> Row {
        let weights: Vec<Vec<Vec<f64>>> = sd.half_cells.iter().zip(steps).map(|(&h, &step)| axis_weights(bump, h, step)).collect();
        let mut cache: HashMap<Piece, f64> = HashMap::new();
        let mut integral = |piece: Piece| -> f64 {
            *cache.entry(piece).or_insert_with(|| integrate(&arrays[piece.data], shape, sd, &weights, piece.dim, piece.order as usize))
        };
        let row = recipes.iter().map(|r| r.iter().map(|&(c, piece)| c * integral(piece)).sum()).collect();
        let resp = responses.iter().map(|&piece| integral(piece)).collect();
        (row, resp)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        subdomains.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        subdomains.iter().map(one).collect()
    }
}

/// Separable quadrature of `data` against `∂^order_dim w` over one subdomain.
fn integrate(data: &[f64], shape: &[usize], sd: &Subdomain, weights: &[Vec<Vec<f64>>], dim: usize, order: usize) -> f64 {
    let ndim = shape.len();
    let lo: Vec<usize> = sd.centre_index.iter().zip(&sd.half_cells).map(|(c, h)| c - h).collect();
    let len: Vec<usize> = sd.half_cells.iter().map(|h| 2 * h + 1).collect();
    let w: Vec<&[f64]> = (0..ndim).map(|d| weights[d][if d == dim { order } else { 0 }].as_slice()).collect();
    let nt = shape[ndim - 1];
    let wt = w[ndim - 1];
    let line = |offset: usize| -> f64 {
        let seg = &data[offset + lo[ndim - 1]..offset + lo[ndim - 1] + len[ndim - 1]];
        seg.iter().zip(wt).map(|(a, b)| a * b).sum()
    };
    match ndim {
        2 => (0..len[0]).map(|i| w[0][i] * line((lo[0] + i) * nt)).sum(),
        3 => {
            let ny = shape[1];
            (0..len[0]).map(|i| w[0][i] * (0..len[1]).map(|j| w[1][j] * line(((lo[0] + i) * ny + lo[1] + j) * nt)).sum::<f64>()).sum()
        }
        _ => unreachable!("fields have one or two space axes"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Axis;
    use crate::pdegen::{simulate_pde, Equation, InitialCondition};

    #[test]
    fn complexity_examples() {
        let terms = enumerate_terms(1, 1, 6, 6);
        let by = |l: &str| terms.iter().find(|t| t.label == l).unwrap().clone();
        assert_eq!(structural_complexity(&by("u u_x")), 4);
        assert_eq!(structural_complexity(&by("1")), 1);
        assert_eq!(structural_complexity(&by("u_xxxx")), 5);
        assert_eq!(structural_complexity(&by("u^5 u_x")), 8);
    }

    #[test]
    fn enumeration_matches_closed_form() {
        for (s, a, mp, md) in [(1, 1, 6, 6), (2, 1, 2, 3), (1, 2, 3, 2), (2, 2, 3, 4)] {
            let terms = enumerate_terms(s, a, mp, md);
            assert_eq!(terms.len(), term_count(s, a, mp, md));
            let mut labels: Vec<_> = terms.iter().map(|t| t.label.clone()).collect();
            labels.sort();
            labels.dedup();
            assert_eq!(labels.len(), terms.len(), "labels must be unique");
        }
        assert_eq!(term_count(1, 1, 6, 6), 49);
        let labels: Vec<String> = enumerate_terms(1, 1, 6, 6).into_iter().map(|t| t.label).collect();
        for l in ["1", "u", "u^6", "u_x", "u_xxxxxx", "u u_x", "u^6 u_x", "u^3 u_xxx"] {
            assert!(labels.contains(&l.to_string()), "{l} missing");
        }
    }

    fn analytic_field(nx: usize, nt: usize) -> Field {
        let space = Axis::periodic(nx, 0.0, 2.0 * std::f64::consts::PI);
        let time = Axis::closed(nt, 0.0, 2.0);
        let mut v = vec![0.0; nx * nt];
        for ix in 0..nx {
            for it in 0..nt {
                let (x, t) = (space.point(ix), time.point(it));
                v[ix * nt + it] = 1.0 + 0.5 * (x - t).sin() + 0.2 * (2.0 * x).cos() * (-t).exp();
            }
        }
        Field::new("u", vec![space], time, v).unwrap()
    }

    /// `∂^k/∂x^k` of the analytic field above.
    fn analytic_dx(x: f64, t: f64, k: u32) -> f64 {
        let cyc = |phase: f64, k: u32| (phase + k as f64 * std::f64::consts::FRAC_PI_2).sin();
        let base = if k == 0 { 1.0 } else { 0.0 };
        base + 0.5 * cyc(x - t, k) + 0.2 * 2f64.powi(k as i32) * cyc(2.0 * x + std::f64::consts::FRAC_PI_2, k) * (-t).exp()
    }

    #[test]
    fn weak_columns_match_direct_quadrature() {
        let (nx, nt) = (256, 201);
        let f = analytic_field(nx, nt);
        let subs = sample_subdomains(&f, 5, &[80, 60], 11).unwrap();
        let lib = build_library(&[&f], 3, 6, &subs, 11).unwrap();
        let raw = lib.raw_design();
        let (xa, ta) = (f.space_axes()[0], *f.time_axis());
        let bump = bump_polynomial(test_function_power(6));
        for (i, sd) in subs.iter().enumerate() {
            let (cx, ct) = (sd.centre_index[0], sd.centre_index[1]);
            let (hx, ht) = (sd.half_cells[0], sd.half_cells[1]);
            for (j, term) in lib.terms.iter().enumerate() {
                let mut direct = 0.0;
                for ix in cx - hx..=cx + hx {
                    for it in ct - ht..=ct + ht {
                        let (x, t) = (xa.point(ix), ta.point(it));
                        let sx = (ix as f64 - cx as f64) / hx as f64;
                        let st = (it as f64 - ct as f64) / ht as f64;
                        let w = horner(&bump, sx) * horner(&bump, st);
                        let mut q = analytic_dx(x, t, 0).powi(term.poly_degrees[0] as i32);
                        if let Some(d) = term.derivative() {
                            q *= analytic_dx(x, t, d.order);
                        }
                        direct += w * q * xa.step() * ta.step();
                    }
                }
                let weak = raw[(i, j)];
                let rel = (weak - direct).abs() / direct.abs().max(1e-3 * raw.column(j).amax());
                assert!(rel < 1e-3, "row {i} term {}: weak {weak} direct {direct} rel {rel}", term.label);
            }
        }
    }

    #[test]
    fn columns_are_unit_norm_and_rows_match_domains() {
        let f = analytic_field(64, 41);
        let subs = sample_subdomains(&f, 37, &[8, 6], 2).unwrap();
        let lib = build_library(&[&f], 2, 2, &subs, 2).unwrap();
        assert_eq!(lib.n_rows(), 37);
        assert_eq!(lib.n_terms(), term_count(1, 1, 2, 2));
        for j in 0..lib.n_terms() {
            assert!((lib.design.column(j).norm() - 1.0).abs() < 1e-12);
            assert!(lib.column_scales[j] > 0.0);
        }
    }

    #[test]
    fn zero_field_names_offending_columns() {
        let f = analytic_field(32, 21);
        let zero = f.with_values(vec![0.0; f.values().len()]).unwrap();
        let subs = sample_subdomains(&zero, 4, &[5, 5], 1).unwrap();
        match build_library(&[&zero], 2, 1, &subs, 1) {
            Err(Error::ZeroColumns(cols)) => {
                assert_eq!(cols.len(), term_count(1, 1, 2, 1) - 1);
                assert!(!cols.contains(&"1".to_string()));
                assert!(cols.contains(&"u u_x".to_string()));
            }
            other => panic!("expected zero-column error, got {other:?}"),
        }
    }

    #[test]
    fn subdomains_are_interior_and_deterministic() {
        let (x, t) = Equation::Burgers.default_grid();
        let f = simulate_pde(Equation::Burgers, x, t, InitialCondition::Gaussian).unwrap();
        let a = sample_subdomains(&f, 2000, &[20, 10], 5).unwrap();
        assert_eq!(a.len(), 2000);
        for sd in &a {
            assert!(sd.centre_index[0] >= 20 && sd.centre_index[0] + 20 < 256);
            assert!(sd.centre_index[1] >= 10 && sd.centre_index[1] + 10 < 101);
        }
        assert_eq!(a, sample_subdomains(&f, 2000, &[20, 10], 5).unwrap());
        assert_eq!(sample_subdomains(&f, 1, &[20, 10], 5).unwrap().len(), 1);
        assert!(matches!(sample_subdomains(&f, 3, &[200, 10], 5), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_burgers_recovers_coefficients() {
        let (x, t) = Equation::Burgers.default_grid();
        let f = simulate_pde(Equation::Burgers, x, t, InitialCondition::Gaussian).unwrap();
        let subs = sample_subdomains(&f, 500, &[24, 12], 3).unwrap();
        let lib = build_library(&[&f], 6, 6, &subs, 3).unwrap();
        assert_eq!(lib.n_terms(), 49);
        let support = [lib.index_of("u u_x").unwrap(), lib.index_of("u_xx").unwrap()];
        let x = crate::linalg::columns(&lib.design, &support);
        let beta = crate::regress::fit_linear(&x, &lib.responses[0], 0.0).unwrap();
        let raw = lib.to_raw(&support, beta.as_slice());
        assert!((raw[0] + 1.0).abs() < 0.03, "u u_x coefficient {}", raw[0]);
        assert!((raw[1] - 0.1).abs() < 0.003, "u_xx coefficient {}", raw[1]);
    }

    #[test]
    fn save_and_load_round_trip() {
        let f = analytic_field(32, 21);
        let subs = sample_subdomains(&f, 6, &[5, 5], 1).unwrap();
        let lib = build_library(&[&f], 2, 2, &subs, 1).unwrap();
        let dir = std::env::temp_dir().join(format!("pdesift-lib-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        lib.save(&dir.join("lib")).unwrap();
        let back = CandidateLibrary::load(&dir.join("lib")).unwrap();
        assert_eq!(back, lib);
        std::fs::remove_dir_all(dir).ok();
    }
}
