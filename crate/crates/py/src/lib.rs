//! Python bindings: plans, stage distributions, expected and exact cycle
//! counts, staged design, and FER simulation.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use rmcsc::cyclecalc::{expected_cycles_single, tanner_cycle_count, CandidateCensus};
use rmcsc::grade::run_pipeline;
use rmcsc::io::{read_alist, write_alist, PlanFile, ResolvedPlan, StageArtifact};
use rmcsc::pipeline::{cycle_counts, design_rmc, reduction_percent};
use rmcsc::protomatrix::{code_rate_and_length, format_rate, hardware_sharing_savings, EdgeDistribution, QcCode};
use rmcsc::simlab::{decode, simulate_fer, ChannelKind, StopRule};

fn to_py(e: rmcsc::Error) -> PyErr {
    match e.root() {
        rmcsc::Error::BudgetExhausted(_) | rmcsc::Error::Infeasible(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A parsed plan file with its stage masses resolved.
#[pyclass(frozen)]
struct Plan {
    inner: ResolvedPlan,
}

#[pymethods]
impl Plan {
    /// Parse TOML plan text; `seed` overrides the plan's chain seed.
    #[staticmethod]
    #[pyo3(signature = (text, seed=None))]
    fn from_toml(text: &str, seed: Option<u64>) -> PyResult<Self> {
        let pf = PlanFile::parse(text).map_err(to_py)?;
        Ok(Plan {
            inner: pf.resolve(seed).map_err(to_py)?,
        })
    }

    #[getter]
    fn gamma(&self) -> usize {
        self.inner.plan.gamma
    }

    #[getter]
    fn kappa(&self) -> usize {
        self.inner.plan.kappa
    }

    #[getter]
    fn z(&self) -> usize {
        self.inner.plan.z
    }

    #[getter]
    fn coupling(&self) -> usize {
        self.inner.plan.coupling
    }

    /// Memory of each stage code.
    fn memories(&self) -> Vec<usize> {
        self.inner.plan.stages.iter().map(|s| s.memory()).collect()
    }

    /// Mass of the new part of each stage.
    fn masses(&self) -> Vec<f64> {
        self.inner.plan.stages.iter().map(|s| s.r_new).collect()
    }

    /// `(length, rate)` of stage `d`, the rate rendered to four decimals.
    fn rate_and_length(&self, d: usize) -> PyResult<(usize, String)> {
        let (n, r) = code_rate_and_length(&self.inner.plan, d).map_err(to_py)?;
        Ok((n, format_rate(r)))
    }

    /// Per-stage distributions as `(offset, weights, e6, e8)`.
    fn grade(&self, py: Python<'_>) -> PyResult<Vec<(usize, Vec<f64>, f64, f64)>> {
        let r = &self.inner;
        let out = py
            .detach(|| run_pipeline(&r.plan, &r.config.grade))
            .map_err(to_py)?;
        Ok(out
            .into_iter()
            .map(|o| (o.u.offset, o.u.weights, o.result.e6, o.result.e8))
            .collect())
    }

    /// Runs the whole staged design; returns one artifact per stage.
    fn design(&self, py: Python<'_>) -> PyResult<Vec<Artifact>> {
        let r = &self.inner;
        let design = py
            .detach(|| design_rmc(&r.plan, &r.p_star, &r.config, &mut |_| {}))
            .map_err(to_py)?;
        design
            .stages
            .into_iter()
            .map(|s| {
                let mut a = StageArtifact::new("rmc", &r.plan, s.stage, r.config.partition.seed, s.matrices)
                    .map_err(to_py)?;
                a.cycles = cycle_counts(&a.matrices, r.plan.coupling, &[4, 6, 8]).map_err(to_py)?;
                Ok(Artifact { inner: a })
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner.plan;
        format!(
            "Plan(gamma={}, kappa={}, z={}, L={}, memories={:?})",
            p.gamma,
            p.kappa,
            p.z,
            p.coupling,
            self.memories()
        )
    }
}

/// One designed stage code.
#[pyclass(frozen)]
struct Artifact {
    inner: StageArtifact,
}

#[pymethods]
impl Artifact {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Artifact {
            inner: serde_json::from_str(text).map_err(json_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn stage(&self) -> usize {
        self.inner.stage
    }

    #[getter]
    fn length(&self) -> usize {
        self.inner.length
    }

    #[getter]
    fn rate(&self) -> String {
        self.inner.rate.clone()
    }

    /// Partitioning matrix, row-major, `-1` for unused entries.
    fn partition(&self) -> Vec<Vec<i32>> {
        self.inner.matrices.k.to_nested()
    }

    /// Circulant powers, row-major, `-1` for unused entries.
    fn lifting(&self) -> Vec<Vec<i32>> {
        self.inner.matrices.t.to_nested()
    }

    /// Cycle counts of lengths 4, 6, 8, `None` where not computed.
    fn cycles(&self) -> (Option<u64>, Option<u64>, Option<u64>) {
        let c = self.inner.cycles;
        (c[0], c[1], c[2])
    }

    fn code(&self) -> PyResult<Code> {
        Ok(Code {
            inner: self.inner.code().map_err(to_py)?,
        })
    }
}

/// Sparse binary parity-check matrix.
#[pyclass(frozen)]
struct Code {
    inner: QcCode,
}

#[pymethods]
impl Code {
    #[staticmethod]
    fn from_alist(text: &str) -> PyResult<Self> {
        Ok(Code {
            inner: read_alist(text).map_err(to_py)?,
        })
    }

    fn to_alist(&self) -> String {
        write_alist(&self.inner)
    }

    #[getter]
    fn n_rows(&self) -> usize {
        self.inner.n_rows()
    }

    #[getter]
    fn n_cols(&self) -> usize {
        self.inner.n_cols()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    /// Exact number of cycles of the given length (4, 6 or 8).
    fn count_cycles(&self, py: Python<'_>, length: usize) -> PyResult<u64> {
        if !matches!(length, 4 | 6 | 8) {
            return Err(PyValueError::new_err(format!("cycle length {length} not in 4, 6, 8")));
        }
        let code = &self.inner;
        py.detach(|| tanner_cycle_count(code, length / 2)).map_err(to_py)
    }

    /// Sum-product decoding of channel LLRs: `(hard decision, converged, iterations)`.
    #[pyo3(signature = (llr, max_iters=50))]
    fn decode(&self, llr: Vec<f64>, max_iters: usize) -> PyResult<(Vec<u8>, bool, usize)> {
        let o = decode(&self.inner, &llr, max_iters).map_err(to_py)?;
        Ok((o.word, o.converged, o.iterations))
    }

    /// All-zero-codeword FER at each channel parameter (Ec/N0 in dB for
    /// `awgn`, crossover probability for `bsc`).
    #[pyo3(signature = (grid, channel="awgn", min_frame_errors=100, max_frames=100_000, max_iters=50, seed=1))]
    fn simulate<'py>(
        &self,
        py: Python<'py>,
        grid: Vec<f64>,
        channel: &str,
        min_frame_errors: u64,
        max_frames: u64,
        max_iters: usize,
        seed: u64,
    ) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let kind = match channel {
            "awgn" => ChannelKind::Awgn,
            "bsc" => ChannelKind::Bsc,
            other => return Err(PyValueError::new_err(format!("unknown channel {other:?}"))),
        };
        let stop = StopRule {
            min_frame_errors,
            max_frames,
            ..Default::default()
        };
        let code = &self.inner;
        let pts = py
            .detach(|| simulate_fer(code, kind, &grid, &stop, max_iters, seed))
            .map_err(to_py)?;
        pts.iter()
            .map(|p| {
                let d = PyDict::new(py);
                let (lo, hi) = p.interval();
                d.set_item("parameter", p.parameter)?;
                d.set_item("frames", p.frames)?;
                d.set_item("frame_errors", p.frame_errors)?;
                d.set_item("bit_errors", p.bit_errors)?;
                d.set_item("fer", p.fer)?;
                d.set_item("ci", (lo, hi))?;
                d.set_item("mean_iterations", p.mean_iterations)?;
                Ok(d)
            })
            .collect()
    }
}

/// Expected active cycle-`2 ell` candidates of a `gamma x kappa` base matrix
/// whose entries follow `weights` over components `offset..`.
#[pyfunction]
#[pyo3(signature = (gamma, kappa, weights, length, offset=0))]
fn expected_cycles(gamma: usize, kappa: usize, weights: Vec<f64>, length: usize, offset: usize) -> PyResult<f64> {
    if !matches!(length, 4 | 6 | 8) {
        return Err(PyValueError::new_err(format!("cycle length {length} not in 4, 6, 8")));
    }
    let u = EdgeDistribution::normalized(offset, weights).map_err(to_py)?;
    expected_cycles_single(length / 2, &u, &CandidateCensus::new(gamma, kappa)).map_err(to_py)
}

/// Fraction of edges saved by sharing the nested base matrices of `artifacts`.
#[pyfunction]
fn sharing_savings(artifacts: Vec<PyRef<'_, Artifact>>) -> PyResult<f64> {
    let bases: Vec<_> = artifacts.iter().map(|a| a.inner.matrices.base()).collect();
    hardware_sharing_savings(&bases).map_err(to_py)
}

/// `(baseline - designed) / baseline` in percent; `None` for an empty baseline.
#[pyfunction]
fn reduction(designed: u64, baseline: u64) -> Option<f64> {
    reduction_percent(designed, baseline)
}

#[pymodule]
fn rmcsc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Plan>()?;
    m.add_class::<Artifact>()?;
    m.add_class::<Code>()?;
    m.add_function(wrap_pyfunction!(expected_cycles, m)?)?;
    m.add_function(wrap_pyfunction!(sharing_savings, m)?)?;
    m.add_function(wrap_pyfunction!(reduction, m)?)?;
    Ok(())
}
