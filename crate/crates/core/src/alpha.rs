//! Task-relation weights: Euclidean simplex projection and the per-row
//! projected-gradient solver for the α objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default projected-gradient budget used by [`update_alpha`].
pub const SOLVER_STEPS: usize = 200;
pub const SOLVER_STEP_SIZE: f64 = 0.1;

/// Validates that `v` lies on the probability simplex within `tol`
/// (entrywise ≥ −tol, sum within tol of 1).
pub fn check_simplex(v: &[f64], tol: f64) -> Result<()> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("empty simplex vector".into()));
    }
    for (i, &x) in v.iter().enumerate() {
        if !x.is_finite() || x < -tol {
            return Err(Error::InvalidArgument(format!(
                "simplex entry {i} is {x}"
            )));
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > tol {
        return Err(Error::InvalidArgument(format!(
            "simplex vector sums to {sum}"
        )));
    }
    Ok(())
}

/// Euclidean projection onto the probability simplex via the
/// sort-and-threshold construction.
pub fn project_to_simplex(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("cannot project an empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite entry in simplex projection".into()));
    }
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    Ok(v.iter().map(|&x| (x - theta).max(0.0)).collect())
}

/// Row-stochastic T×T task-relation matrix; row t weights how much task t's
/// objective borrows each task's loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaMatrix {
    rows: Vec<Vec<f64>>,
}

impl AlphaMatrix {
    pub fn uniform(t: usize) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidArgument("zero tasks".into()));
        }
        Ok(AlphaMatrix {
            rows: vec![vec![1.0 / t as f64; t]; t],
        })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let t = rows.len();
        if t == 0 {
            return Err(Error::InvalidArgument("alpha matrix needs at least one row".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != t {
                return Err(Error::Shape(format!(
                    "alpha row {i} has {} entries for {t} tasks",
                    row.len()
                )));
            }
            check_simplex(row, 1e-8)
                .map_err(|e| Error::InvalidArgument(format!("alpha row {i}: {e}")))?;
        }
        Ok(AlphaMatrix { rows })
    }

    pub fn num_tasks(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.rows[t]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Mean of each column; these are the per-task weights the training
    /// step applies when the T row objectives are averaged.
    pub fn column_means(&self) -> Vec<f64> {
        let t = self.num_tasks();
        let mut means = vec![0.0; t];
        for row in &self.rows {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= t as f64);
        means
    }
}

/// Frozen inputs to the α program: per-task re-weighted losses, the semantic
/// divergence matrix E, and the two scalars of the objective.
#[derive(Debug, Clone)]
pub struct AlphaObjectiveInputs {
    task_losses: Vec<f64>,
    e: Vec<Vec<f64>>,
    pub lambda_e: f64,
    pub reg: f64,
}

impl AlphaObjectiveInputs {
    pub fn new(task_losses: Vec<f64>, e: Vec<Vec<f64>>, lambda_e: f64, reg: f64) -> Result<Self> {
        let t = task_losses.len();
        if t == 0 {
            return Err(Error::InvalidArgument("no tasks".into()));
        }
        if let Some(l) = task_losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "task losses must be finite and >= 0, got {l}"
            )));
        }
        if e.len() != t || e.iter().any(|row| row.len() != t) {
            return Err(Error::Shape(format!("E must be {t}x{t}")));
        }
        for i in 0..t {
            if e[i][i] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "E diagonal entry {i} is {}, expected 0",
                    e[i][i]
                )));
            }
            for j in 0..t {
                if !e[i][j].is_finite() || e[i][j] < 0.0 {
                    return Err(Error::InvalidArgument(format!(
                        "E[{i}][{j}] = {}",
                        e[i][j]
                    )));
                }
                if (e[i][j] - e[j][i]).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "E is asymmetric at ({i},{j}): {} vs {}",
                        e[i][j], e[j][i]
                    )));
                }
            }
        }
        if !lambda_e.is_finite() || lambda_e < 0.0 || !reg.is_finite() || reg < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "lambda_e and reg must be finite and >= 0, got {lambda_e}, {reg}"
            )));
        }
        Ok(AlphaObjectiveInputs {
            task_losses,
            e,
            lambda_e,
            reg,
        })
    }

    pub fn num_tasks(&self) -> usize {
        self.task_losses.len()
    }

    /// Linear coefficients of row t's objective: c_i = ε̂^β_i + λ_E·E[t][i].
    fn costs(&self, t: usize) -> Vec<f64> {
        self.task_losses
            .iter()
            .zip(&self.e[t])
            .map(|(l, e)| l + self.lambda_e * e)
            .collect()
    }
}

/// Σ_i α_{t,i}·(ε̂^β_i + λ_E·E[t][i]) + reg·‖α_t‖₂.
pub fn alpha_row_objective(
    alpha_t: &[f64],
    t: usize,
    inputs: &AlphaObjectiveInputs,
) -> Result<f64> {
    if alpha_t.len() != inputs.num_tasks() {
        return Err(Error::Shape(format!(
            "alpha row has {} entries for {} tasks",
            alpha_t.len(),
            inputs.num_tasks()
        )));
    }
    if t >= inputs.num_tasks() {
        return Err(Error::InvalidArgument(format!("task index {t} out of range")));
    }
    check_simplex(alpha_t, 1e-6)?;
    let costs = inputs.costs(t);
    let linear: f64 = alpha_t.iter().zip(&costs).map(|(a, c)| a * c).sum();
    let norm: f64 = alpha_t.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok(linear + inputs.reg * norm)
}

/// Projected-gradient descent on row t's objective with step halving on any
/// objective increase; the returned point never exceeds the initial value.
pub fn solve_alpha_row(
    t: usize,
    inputs: &AlphaObjectiveInputs,
    init: &[f64],
    steps: usize,
    step_size: f64,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("solver needs at least one step".into()));
    }
    if !(step_size.is_finite() && step_size > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step_size must be > 0, got {step_size}"
        )));
    }
    let mut x = project_to_simplex(init)?;
    let mut fx = alpha_row_objective(&x, t, inputs)?;
    if !fx.is_finite() {
        return Err(Error::Numerical(format!(
            "alpha objective is {fx} at the initial point of row {t}"
        )));
    }
    let costs = inputs.costs(t);
    let mut step = step_size;
    for _ in 0..steps {
        // ∇f = c + reg·α/‖α‖; ‖α‖ ≥ 1/√T on the simplex, so no 0/0.
        let norm: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let grad: Vec<f64> = x
            .iter()
            .zip(&costs)
            .map(|(a, c)| c + inputs.reg * a / norm)
            .collect();
        loop {
            let cand: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a - step * g).collect();
            let cand = project_to_simplex(&cand)?;
            let fc = alpha_row_objective(&cand, t, inputs)?;
            if !fc.is_finite() {
                return Err(Error::Numerical(format!(
                    "alpha objective became {fc} while solving row {t}"
                )));
            }
            if fc <= fx + 1e-12 {
                x = cand;
                fx = fc;
                break;
            }
            step *= 0.5;
            if step < 1e-14 {
                return Ok(x);
            }
        }
    }
    Ok(x)
}

/// Re-solves every row, warm-starting each from its previous value. Rows are
/// independent because the objective separates across t.
pub fn update_alpha(alpha: &AlphaMatrix, inputs: &AlphaObjectiveInputs) -> Result<AlphaMatrix> {
    if alpha.num_tasks() != inputs.num_tasks() {
        return Err(Error::Shape(format!(
            "alpha has {} tasks, inputs have {}",
            alpha.num_tasks(),
            inputs.num_tasks()
        )));
    }
    let mut rows = Vec::with_capacity(alpha.num_tasks());
    for t in 0..alpha.num_tasks() {
        rows.push(solve_alpha_row(
            t,
            inputs,
            alpha.row(t),
            SOLVER_STEPS,
            SOLVER_STEP_SIZE,
        )?);
    }
    AlphaMatrix::from_rows(rows)
}
