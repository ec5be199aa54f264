//! The two published test polynomials and their reference tables.

use rayon::prelude::*;
use serde::Serialize;

use crate::pipeline::{analyze, AnalysisConfig, DistanceReport};
use crate::polyalg::{MatrixPolynomial, NormKind};
use crate::{Result, C64};

/// `n = 2`, `k = 3`.
pub fn example1() -> MatrixPolynomial {
    MatrixPolynomial::from_real_rows(
        2,
        &[
            &[-0.1414, -0.1490, 1.1928, 0.9702],
            &[0.8837, 0.9969, 0.2190, 0.0259],
            &[0.6346, 0.9689, 0.6252, -0.0649],
            &[-1.9867, 1.2800, 0.6097, -0.1477],
        ],
    )
    .expect("finite coefficients")
}

/// `n = 3`, `k = 2`.
pub fn example2() -> MatrixPolynomial {
    MatrixPolynomial::from_real_rows(
        3,
        &[
            &[2.7694, 0.7254, -0.2050, -1.3499, -0.0631, -0.1241, 3.0349, 0.7147, 1.4897],
            &[1.4090, -1.2075, 0.4889, 1.4172, 0.7172, 1.0347, 0.6715, 1.6302, 0.7269],
            &[-0.3034, 0.8884, -0.8095, 0.2939, -1.1471, -2.9443, -0.7873, -1.0689, 1.4384],
        ],
    )
    .expect("finite coefficients")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Example {
    One,
    Two,
}

impl Example {
    pub fn polynomial(self) -> MatrixPolynomial {
        match self {
            Example::One => example1(),
            Example::Two => example2(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PaperRow {
    pub r_plus_1: usize,
    pub lb_scaling: f64,
    pub lb_sigma: f64,
    pub distance: f64,
    /// A second published distance from a global search, where it differs.
    pub distance_global: Option<f64>,
    pub upper_bound: f64,
}

impl PaperRow {
    /// The smallest published distance.
    pub fn best_distance(&self) -> f64 {
        self.distance_global.map_or(self.distance, |g| g.min(self.distance))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PaperTable {
    pub id: usize,
    pub example: Example,
    pub lambda0: f64,
    pub norm: NormKind,
    pub rows: Vec<PaperRow>,
}

const fn row(r_plus_1: usize, lb_scaling: f64, lb_sigma: f64, distance: f64, upper_bound: f64) -> PaperRow {
    PaperRow { r_plus_1, lb_scaling, lb_sigma, distance, distance_global: None, upper_bound }
}

const fn row_g(
    r_plus_1: usize,
    lb_scaling: f64,
    lb_sigma: f64,
    distance: f64,
    global: f64,
    upper_bound: f64,
) -> PaperRow {
    PaperRow { r_plus_1, lb_scaling, lb_sigma, distance, distance_global: Some(global), upper_bound }
}

const LB_1_0: [(f64, f64); 5] = [
    (0.10797922, 0.10683102),
    (0.17943541, 0.17354340),
    (0.83444419, 0.65889251),
    (0.90827444, 0.75348431),
    (0.99263034, 0.85789363),
];
const LB_1_1: [(f64, f64); 5] = [
    (1.35798224, 0.70551994),
    (1.35690676, 0.57675049),
    (1.35798160, 0.56881053),
    (1.35689708, 0.56908887),
    (1.35690633, 0.56789237),
];
const LB_2_0: [(f64, f64); 5] = [
    (0.25800277, 0.25750097),
    (0.43621850, 0.38556596),
    (0.88752500, 0.83727454),
    (1.19949290, 1.13421484),
    (1.28885600, 1.07999296),
];
const LB_2_M1: [(f64, f64); 5] = [
    (0.99413714, 0.49049043),
    (1.23816383, 0.57712979),
    (1.33820455, 0.56416354),
    (1.36050277, 0.59682624),
    (1.46702487, 0.61024547),
];

fn build(lbs: &[(f64, f64); 5], dist: [f64; 5], ub: [f64; 5]) -> Vec<PaperRow> {
    (0..5).map(|i| row(i + 2, lbs[i].0, lbs[i].1, dist[i], ub[i])).collect()
}

/// All eight published tables.
pub fn paper_tables() -> Vec<PaperTable> {
    let (one, two) = (Example::One, Example::Two);
    let (fro, spec) = (NormKind::Frobenius, NormKind::Two);
    let t = |id, example, lambda0, norm, rows| PaperTable { id, example, lambda0, norm, rows };
    let mut t5 = build(
        &LB_2_0,
        [0.25904415, 0.69617957, 1.84231345, 1.84468801, 2.60665217],
        [0.268796, 0.82200773, 2.04437686, 2.43953618, 2.76918876],
    );
    t5[4] = row_g(6, LB_2_0[4].0, LB_2_0[4].1, 2.60665217, 2.60665222, 2.76918876);
    let t6_bfgs = [1.14436402, 2.22703947, 2.33112163, 2.44152499, 2.62503371];
    let t6_global = [1.14436402, 2.22703947, 2.33112163, 2.44152500, 2.64810973];
    let t6_ub = [1.14869786, 2.37565159, 2.51177974, 2.89719526, 2.93776340];
    let t6 = (0..5)
        .map(|i| row_g(i + 2, LB_2_M1[i].0, LB_2_M1[i].1, t6_bfgs[i], t6_global[i], t6_ub[i]))
        .collect();
    vec![
        t(1, one, 0.0, fro, build(
            &LB_1_0,
            [0.14992951, 0.27433442, 1.41424988, 1.46326471, 1.66359899],
            [0.1504944, 0.27996519, 1.4189444, 1.47185479, 1.72452708],
        )),
        t(2, one, 1.0, fro, build(
            &LB_1_1,
            [1.35814780, 1.42078740, 1.42220397, 1.45865399, 1.46349849],
            [1.39370758, 1.57015806, 1.76028594, 1.82967789, 1.57008146],
        )),
        t(3, one, 0.0, spec, build(
            &LB_1_0,
            [0.10797922, 0.19516063, 1.04436762, 1.13265970, 1.55726928],
            [0.11368413, 0.21687613, 1.05968598, 1.20943709, 1.70199290],
        )),
        t(4, one, 1.0, spec, build(
            &LB_1_1,
            [1.35798224, 1.35805109, 1.35805159, 1.35805160, 1.416503376],
            [1.35827634, 1.35813196, 1.56108421, 1.52575381, 1.43921050],
        )),
        t(5, two, 0.0, fro, t5),
        t(6, two, -1.0, fro, t6),
        t(7, two, 0.0, spec, build(
            &LB_2_0,
            [0.25802766, 0.47215137, 1.11581440, 1.49604879, 1.90820166],
            [0.2581792, 0.58937606, 1.57310992, 1.83989133, 2.39309442],
        )),
        t(8, two, -1.0, spec, build(
            &LB_2_M1,
            [0.99413892, 1.44794214, 1.49553573, 1.70157792, 2.19715515],
            [1.08915666, 1.95311420, 1.92278887, 2.04844570, 2.64000204],
        )),
    ]
}

pub fn paper_table(id: usize) -> Option<PaperTable> {
    paper_tables().into_iter().find(|t| t.id == id)
}

#[derive(Clone, Debug, Serialize)]
pub struct TableOptions {
    pub starts: usize,
    pub bound_starts: usize,
    pub bound_budget: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for TableOptions {
    fn default() -> Self {
        TableOptions { starts: 20, bound_starts: 10, bound_budget: 400, seed: 0, max_iter: 1000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RowComparison {
    pub paper: PaperRow,
    pub report: DistanceReport,
    /// `computed - paper` for the distance, lb_scaling, lb_sigma, ub.
    pub distance_dev: Option<f64>,
    pub lb_scaling_dev: Option<f64>,
    pub lb_sigma_dev: Option<f64>,
    pub upper_bound_dev: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TableReport {
    pub table: PaperTable,
    pub options: TableOptions,
    pub rows: Vec<RowComparison>,
}

impl TableReport {
    pub fn max_abs_distance_dev(&self) -> f64 {
        self.rows.iter().filter_map(|r| r.distance_dev).fold(0.0, |a, d| a.max(d.abs()))
    }

    pub fn sandwich_ok(&self) -> bool {
        self.rows.iter().all(|r| r.report.sandwich_ok)
    }

    /// Fixed-width text rendering, one line per multiplicity.
    pub fn render(&self) -> String {
        let t = &self.table;
        let mut out = format!(
            "Table {}  example {:?}  λ0 = {}  norm = {}\n{:>4} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10}\n",
            t.id, t.example, t.lambda0, t.norm, "r+1", "lb_scaling", "lb_sigma", "distance", "paper", "ub", "Δdist"
        );
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.8}"));
        for r in &self.rows {
            out += &format!(
                "{:>4} {:>12} {:>12} {:>12} {:>12.8} {:>12} {:>10}\n",
                r.paper.r_plus_1,
                f(r.report.lower_bound_scaling),
                f(r.report.lower_bound_sigma),
                f(r.report.distance),
                r.paper.best_distance(),
                f(r.report.upper_bound),
                r.distance_dev.map_or_else(|| "-".into(), |d| format!("{d:+.2e}")),
            );
        }
        out
    }
}

pub fn row_config(table: &PaperTable, r_plus_1: usize, opts: &TableOptions) -> AnalysisConfig {
    let mut cfg = AnalysisConfig::new(C64::new(table.lambda0, 0.0), r_plus_1, table.norm).with_seed(opts.seed);
    cfg.distopt.starts = opts.starts;
    cfg.distopt.max_iter = opts.max_iter;
    cfg.distopt.max_evals = 5 * opts.max_iter;
    cfg.search.starts = opts.bound_starts;
    cfg.search.budget = opts.bound_budget;
    cfg
}

pub fn reproduce_table(table: &PaperTable, opts: &TableOptions) -> Result<TableReport> {
    let poly = table.example.polynomial();
    let rows = table
        .rows
        .par_iter()
        .map(|paper| {
            let report = analyze(&poly, &row_config(table, paper.r_plus_1, opts))?;
            let dev = |x: Option<f64>, p: f64| x.map(|v| v - p);
            Ok(RowComparison {
                paper: *paper,
                distance_dev: dev(report.distance, paper.best_distance()),
                lb_scaling_dev: dev(report.lower_bound_scaling, paper.lb_scaling),
                lb_sigma_dev: dev(report.lower_bound_sigma, paper.lb_sigma),
                upper_bound_dev: dev(report.upper_bound, paper.upper_bound),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TableReport { table: table.clone(), options: opts.clone(), rows })
}
