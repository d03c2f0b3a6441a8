//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::mesh::{build_grid, BoundaryCondition, Domain, Grid, Sigma};
use crate::rearrange::Weight;

const KEYS: &[&str] = &[
    "task",
    "domain",
    "elements_per_axis",
    "bc",
    "sigma",
    "weight",
    "tol",
    "max_iter",
    "seed",
    "output_dir",
    "stripes",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Solve,
    Minimize,
    Maximize,
    Sweep,
    Probe,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Minimize => "minimize",
            Task::Maximize => "maximize",
            Task::Sweep => "sweep",
            Task::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Result<Task> {
        Ok(match s {
            "solve" => Task::Solve,
            "minimize" => Task::Minimize,
            "maximize" => Task::Maximize,
            "sweep" => Task::Sweep,
            "probe" => Task::Probe,
            other => {
                return Err(Error::Config(format!(
                    "unknown task `{other}` (expected solve, minimize, maximize, sweep or probe)"
                )))
            }
        })
    }
}

/// How the cell values are given.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightSpec {
    /// One value per cell, in cell order.
    Values(Vec<f64>),
    /// `high` on the first `round(fraction · cells)` cells, `low` on the rest.
    TwoValued { high: f64, fraction: f64, low: f64 },
    /// A weight CSV (`element,value`).
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub domain: Domain,
    pub elements_per_axis: usize,
    pub bc: BoundaryCondition,
    pub weight_spec: WeightSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Stripe counts for `sweep`.
    pub stripes: Vec<usize>,
    /// The weight resolved on the grid.
    pub weight: Weight,
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.domain, self.elements_per_axis, &self.bc)
    }
}

/// Parses and validates a configuration. The task comes from the `task` key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_for(text, None, Path::new("."))
}

/// Parses a configuration for `task` (when the caller already knows it, as the
/// command line does). Relative weight file paths resolve against `base`.
pub fn parse_config_for(text: &str, task: Option<Task>, base: &Path) -> Result<RunConfig> {
    let entries = entries(text)?;
    let get = |k: &str| entries.get(k).map(String::as_str);
    let require = |k: &str| get(k).ok_or_else(|| Error::Config(format!("missing required key `{k}`")));

    let task = match (task, get("task")) {
        (Some(t), Some(s)) if Task::parse(s)? != t => {
            return Err(Error::Config(format!(
                "config declares task `{s}` but `{}` was requested",
                t.as_str()
            )))
        }
        (Some(t), _) => t,
        (None, Some(s)) => Task::parse(s)?,
        (None, None) => return Err(Error::Config("missing required key `task`".into())),
    };

    let corners = floats("domain", require("domain")?)?;
    let domain = match corners[..] {
        [a, b] => Domain::Interval { a, b },
        [x0, y0, x1, y1] => Domain::Rectangle { x0, y0, x1, y1 },
        _ => {
            return Err(Error::Config(format!(
                "`domain` needs 2 values (interval) or 4 (rectangle corners), found {}",
                corners.len()
            )))
        }
    };
    let elements_per_axis: usize = scalar("elements_per_axis", require("elements_per_axis")?)?;

    let bc = match require("bc")? {
        "dirichlet" => {
            if get("sigma").is_some() {
                return Err(Error::Config("`sigma` only applies to bc = robin".into()));
            }
            BoundaryCondition::Dirichlet
        }
        "robin" => {
            let s = floats("sigma", require("sigma")?)?;
            BoundaryCondition::Robin(match s[..] {
                [v] => Sigma::Constant(v),
                _ => Sigma::PerFace(s),
            })
        }
        "neumann" => return Err(Error::NeumannExcluded),
        other => return Err(Error::Config(format!("unknown bc `{other}` (expected dirichlet or robin)"))),
    };

    let weight_spec = weight_spec(require("weight")?)?;
    let tol = match get("tol") {
        Some(s) => scalar::<f64>("tol", s)?,
        None => 1e-10,
    };
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::Config(format!("`tol` must be positive, found {tol}")));
    }
    let max_iter = match get("max_iter") {
        Some(s) => scalar("max_iter", s)?,
        None => 500,
    };
    if max_iter == 0 {
        return Err(Error::Config("`max_iter` must be at least 1".into()));
    }
    let seed = match get("seed") {
        Some(s) => scalar("seed", s)?,
        None => 0,
    };
    let output_dir = PathBuf::from(get("output_dir").unwrap_or("out"));
    let stripes = match get("stripes") {
        Some(s) => list("stripes", s)?,
        None => vec![2, 4, 8, 16],
    };
    if get("stripes").is_some() && task != Task::Sweep {
        return Err(Error::Config("`stripes` only applies to task = sweep".into()));
    }

    let grid = build_grid(domain, elements_per_axis, &bc)?;
    let weight = resolve_weight(&weight_spec, &grid, base)?;
    check_regime(task, &weight, &grid, &stripes)?;

    Ok(RunConfig {
        task,
        domain,
        elements_per_axis,
        bc,
        weight_spec,
        tol,
        max_iter,
        seed,
        output_dir,
        stripes,
        weight,
    })
}

/// Key/value pairs of a flat config.
fn entries(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, found `{line}`", k + 1)))?;
        let key = key.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Config(format!("line {}: unknown key `{key}`", k + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", k + 1)));
        }
    }
    Ok(out)
}

fn scalar<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{s}`")))
}

fn list<T: std::str::FromStr>(key: &str, s: &str) -> Result<Vec<T>> {
    let v = s.split(',').map(|p| scalar(key, p)).collect::<Result<Vec<T>>>()?;
    if v.is_empty() {
        return Err(Error::Config(format!("`{key}` is empty")));
    }
    Ok(v)
}

fn floats(key: &str, s: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = list(key, s)?;
    if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
        return Err(Error::Config(format!("`{key}`: {bad} is not finite")));
    }
    Ok(v)
}

/// `list: v₁, v₂, …`, `two-valued: high, fraction, low` or `file: path`.
fn weight_spec(s: &str) -> Result<WeightSpec> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("`weight` needs a `list:`, `two-valued:` or `file:` prefix, found `{s}`")))?;
    match kind.trim() {
        "list" => Ok(WeightSpec::Values(floats("weight", rest)?)),
        "two-valued" => match floats("weight", rest)?[..] {
            [high, fraction, low] if (0.0..=1.0).contains(&fraction) => Ok(WeightSpec::TwoValued { high, fraction, low }),
            [_, fraction, _] => Err(Error::Config(format!("`weight`: fraction {fraction} is outside [0, 1]"))),
            _ => Err(Error::Config("`weight = two-valued:` needs high, fraction, low".into())),
        },
        "file" => {
            let path = rest.trim();
            if path.is_empty() {
                return Err(Error::Config("`weight = file:` needs a path".into()));
            }
            Ok(WeightSpec::File(PathBuf::from(path)))
        }
        other => Err(Error::Config(format!("unknown weight kind `{other}`"))),
    }
}

pub fn resolve_weight(spec: &WeightSpec, grid: &Grid, base: &Path) -> Result<Weight> {
    let cells = grid.element_count();
    match spec {
        WeightSpec::Values(v) => {
            if v.len() != cells {
                return Err(Error::Config(format!("`weight` lists {} values for {cells} cells", v.len())));
            }
            Weight::on_grid(grid, v.clone())
        }
        WeightSpec::TwoValued { high, fraction, low } => {
            let k = (fraction * cells as f64).round() as usize;
            Weight::on_grid(grid, (0..cells).map(|e| if e < k { *high } else { *low }).collect())
        }
        WeightSpec::File(path) => {
            let path = if path.is_absolute() { path.clone() } else { base.join(path) };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let w = Weight::from_csv(&text, grid.element_measure())?;
            if w.len() != cells {
                return Err(Error::Config(format!(
                    "{} holds {} values for {cells} cells",
                    path.display(),
                    w.len()
                )));
            }
            Ok(w)
        }
    }
}

fn check_regime(task: Task, weight: &Weight, grid: &Grid, stripes: &[usize]) -> Result<()> {
    let integral = weight.integral();
    let positive_part = weight.max() > 0.0;
    match task {
        Task::Solve => Ok(()),
        Task::Minimize | Task::Probe if !positive_part => Err(Error::Regime(format!(
            "task `{}` needs some positive weight values; with m ≤ 0 there is no positive principal eigenvalue",
            task.as_str()
        ))),
        Task::Maximize if integral <= 0.0 => Err(Error::Regime(format!(
            "maximize needs a positive weight integral (found {integral:e}); when it is nonpositive λ₁ is unbounded above on the class, run the sweep task instead"
        ))),
        Task::Sweep if integral > 0.0 => Err(Error::Regime(format!(
            "sweep needs a nonpositive weight integral (found {integral:e}); for a positive one λ₁ has a maximizer, run the maximize task instead"
        ))),
        Task::Sweep if !positive_part => Err(Error::Regime("sweep needs some positive weight values".into())),
        Task::Sweep => {
            let n = grid.elements_per_axis();
            match stripes.iter().find(|&&k| k == 0 || n % (2 * k) != 0) {
                Some(k) => Err(Error::Config(format!(
                    "stripe count {k} does not divide {n} cells per axis into pairs of equal stripes"
                ))),
                None => Ok(()),
            }
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = "task = solve\ndomain = 0, 1\nelements_per_axis = 8\nbc = dirichlet\nweight = two-valued: 1, 0.5, -1\n";

    #[test]
    fn minimal_solve_config() {
        let c = parse_config(SOLVE).unwrap();
        assert_eq!(c.task, Task::Solve);
        assert_eq!(c.weight.values(), &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(c.tol, 1e-10);
        assert_eq!(c.output_dir, PathBuf::from("out"));
    }

    #[test]
    fn comments_lists_and_rectangles() {
        let text = "# robin square\ntask = minimize  # trailing\ndomain = 0, 0, 2, 1\nelements_per_axis = 2\nbc = robin\nsigma = 1, 1, 0.5, 0, 0, 0, 0, 0\nweight = list: 3, -1, 0.5, 2\nseed = 7\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.domain, Domain::Rectangle { x0: 0.0, y0: 0.0, x1: 2.0, y1: 1.0 });
        assert!(matches!(c.bc, BoundaryCondition::Robin(Sigma::PerFace(ref v)) if v.len() == 8));
        assert_eq!(c.seed, 7);
        assert_eq!(c.weight.element_measure(), 0.5);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config(&format!("{SOLVE}sigmaa = 1\n")).unwrap_err();
        assert!(err.to_string().contains("`sigmaa`"), "{err}");
    }

    #[test]
    fn missing_and_malformed_values() {
        let no_bc = SOLVE.replace("bc = dirichlet\n", "");
        assert!(parse_config(&no_bc).unwrap_err().to_string().contains("`bc`"));
        assert!(parse_config(&SOLVE.replace("= 8", "= eight")).is_err());
        assert!(parse_config(&SOLVE.replace("two-valued: 1, 0.5, -1", "list: 1, 2")).is_err());
        assert!(parse_config(&SOLVE.replace("two-valued: 1, 0.5, -1", "1, 2")).is_err());
        assert!(parse_config(&format!("{SOLVE}tol = 1e-8\ntol = 1e-9\n")).is_err());
        assert!(matches!(parse_config(&SOLVE.replace("dirichlet", "neumann")), Err(Error::NeumannExcluded)));
        assert!(parse_config(&format!("{SOLVE}sigma = 1\n")).is_err());
    }

    #[test]
    fn regime_errors_before_compute() {
        let max = SOLVE.replace("task = solve", "task = maximize");
        assert!(matches!(parse_config(&max), Err(Error::Regime(_))));
        let sweep = SOLVE.replace("task = solve", "task = sweep").replace("0.5, -1", "0.75, -1");
        assert!(matches!(parse_config(&sweep), Err(Error::Regime(_))));
        let min = SOLVE.replace("task = solve", "task = minimize").replace("1, 0.5", "-1, 0.5");
        assert!(matches!(parse_config(&min), Err(Error::Regime(_))));
        let ok = SOLVE.replace("task = solve", "task = sweep").replace("= 8", "= 32");
        assert_eq!(parse_config(&ok).unwrap().stripes, vec![2, 4, 8, 16]);
        assert!(parse_config(&format!("{ok}stripes = 3\n")).is_err());
        assert!(parse_config(&SOLVE.replace("task = solve", "task = sweep")).is_err());
    }

    #[test]
    fn requested_task_must_agree() {
        assert!(parse_config_for(SOLVE, Some(Task::Minimize), Path::new(".")).is_err());
        let untasked = SOLVE.replace("task = solve\n", "");
        assert_eq!(parse_config_for(&untasked, Some(Task::Probe), Path::new(".")).unwrap().task, Task::Probe);
        assert!(parse_config(&untasked).is_err());
    }
}
