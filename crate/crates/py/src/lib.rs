//! Python bindings: models, decompositions, the two-party protocol, the
//! Clifford toy model, teleportation and certificates.
//!
//! Structured results are returned as plain dicts decoded from the same
//! JSON records the CLI writes.

use nlqc::approxcode;
use nlqc::decompose::{self, QuarterDecomposition};
use nlqc::holocode::{run_toy_protocol, StackConfig, ToyInputs};
use nlqc::lattice::{self, ModelSpec, Ring};
use nlqc::protocol::{self, Fault, PseudoBulkSpec};
use nlqc::qcore::StateVector;
use nlqc::spread::{self, LightConeFit};
use nlqc::stab::random_clifford_circuit;
use nlqc::teleport;
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

create_exception!(nlqc_py, NlqcError, PyValueError, "Error raised by the nlqc core.");
create_exception!(nlqc_py, LocalityError, NlqcError, "A party touched a register it does not hold.");

fn py_err(e: nlqc::Error) -> PyErr {
    match &e {
        nlqc::Error::Locality { .. } => LocalityError::new_err(e.to_string()),
        _ => NlqcError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| NlqcError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_fault(name: Option<&str>) -> PyResult<Option<Fault>> {
    name.map(|s| {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| PyValueError::new_err(format!("unknown fault '{s}'")))
    })
    .transpose()
}

fn state(amps: Vec<Complex64>, dims: Vec<usize>) -> PyResult<StateVector> {
    StateVector::new(dims, amps).map_err(py_err)
}

/// A lattice model on a qubit ring.
#[pyclass(name = "Model", module = "nlqc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    ring: Ring,
    spec: ModelSpec,
}

#[pymethods]
impl PyModel {
    /// Random Haar brickwork circuit.
    #[staticmethod]
    #[pyo3(signature = (n_sites, depth, seed = 0))]
    fn brickwork(n_sites: usize, depth: usize, seed: u64) -> PyResult<Self> {
        let ring = Ring::qubits(n_sites).map_err(py_err)?;
        Ok(PyModel { ring, spec: lattice::random_brickwork(ring, depth, seed) })
    }

    /// Transverse-field Ising ring evolved for `time`.
    #[staticmethod]
    fn tfim(n_sites: usize, j: f64, h: f64, time: f64) -> PyResult<Self> {
        let ring = Ring::qubits(n_sites).map_err(py_err)?;
        Ok(PyModel { ring, spec: lattice::tfim(ring, j, h, time) })
    }

    #[getter]
    fn n_sites(&self) -> usize {
        self.ring.n_sites()
    }

    /// Exact angular spread of the evolution.
    fn exact_spread(&self) -> PyResult<f64> {
        let u = lattice::evolve_model(&self.spec, self.ring).map_err(py_err)?;
        spread::exact_spread(&u, self.ring).map_err(py_err)
    }

    /// Lieb-Robinson fit of the time-zero Hamiltonian (or circuit).
    fn lr_profile(&self, times: Vec<f64>, distances: Vec<usize>) -> PyResult<PyLightConeFit> {
        let fit = spread::lr_profile(&self.spec.at_time(0.0), self.ring, &times, &distances).map_err(py_err)?;
        Ok(PyLightConeFit(fit))
    }

    /// Quarter decomposition of the evolution; a fit attaches the truncation certificate.
    #[pyo3(signature = (truncate = false, fit = None))]
    fn decompose(&self, truncate: bool, fit: Option<&PyLightConeFit>) -> PyResult<PyDecomposition> {
        let dec = decompose::decompose_swap_model(&self.spec, self.ring, truncate, fit.map(|f| &f.0))
            .map_err(py_err)?;
        Ok(PyDecomposition { dec, model: self.clone() })
    }

    fn __repr__(&self) -> String {
        let kind = match &self.spec {
            ModelSpec::BrickworkCircuit { layers } => format!("brickwork depth {}", layers.len()),
            ModelSpec::LocalHamiltonian { time, .. } => format!("hamiltonian t={time}"),
        };
        format!("Model({} sites, {kind})", self.ring.n_sites())
    }
}

#[pyclass(name = "LightConeFit", module = "nlqc_py", skip_from_py_object)]
#[derive(Clone)]
struct PyLightConeFit(LightConeFit);

#[pymethods]
impl PyLightConeFit {
    #[getter]
    fn a(&self) -> f64 {
        self.0.a
    }
    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }
    #[getter]
    fn v(&self) -> f64 {
        self.0.v
    }
    #[getter]
    fn residual(&self) -> f64 {
        self.0.residual
    }
    fn bound(&self, d: f64, t: f64) -> f64 {
        self.0.bound(d, t)
    }
    fn __repr__(&self) -> String {
        format!("LightConeFit(a={:.4}, b={:.4}, v={:.4})", self.0.a, self.0.b, self.0.v)
    }
}

#[pyclass(name = "Decomposition", module = "nlqc_py")]
struct PyDecomposition {
    dec: QuarterDecomposition,
    model: PyModel,
}

#[pymethods]
impl PyDecomposition {
    #[getter]
    fn truncated(&self) -> bool {
        self.dec.truncated
    }

    #[getter]
    fn residual_bound(&self) -> f64 {
        self.dec.residual_bound
    }

    /// Worst residual against the exact evolution over seeded product inputs.
    #[pyo3(signature = (trials = 10, seed = 0))]
    fn verify(&mut self, trials: usize, seed: u64) -> PyResult<f64> {
        let u = lattice::evolve_model(&self.model.spec, self.model.ring).map_err(py_err)?;
        let r = decompose::verify_decomposition(&self.dec, &u, self.model.ring, trials, seed).map_err(py_err)?;
        self.dec.measured_residual = Some(r);
        Ok(r)
    }

    fn manifest<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.dec.manifest())
    }

    /// Runs the two-party protocol on a random pure input and returns the
    /// trace distance to the pseudo-bulk output.
    #[pyo3(signature = (seed = 0, fault = None))]
    fn run_protocol<'py>(&self, py: Python<'py>, seed: u64, fault: Option<&str>) -> PyResult<Bound<'py, PyAny>> {
        let fault = parse_fault(fault)?;
        let pb = PseudoBulkSpec::swap_default(self.model.ring, self.model.spec.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = StateVector::random(vec![pb.dim_a, pb.dim_b], &mut rng).density().into_matrix();
        let run = protocol::run_nlqc_with(&pb, &self.dec, &rho, fault).map_err(py_err)?;
        let target = protocol::pseudo_bulk_dynamics(&pb, &rho).map_err(py_err)?;
        let gap = protocol::trace_distance(&run.output, &target).map_err(py_err)?;
        let audit = protocol::audit(&run.transcript).is_ok();
        to_py(
            py,
            &serde_json::json!({
                "trace_distance": gap,
                "exchanges": run.transcript.exchange_count(),
                "audit_ok": audit,
            }),
        )
    }
}

/// Entangled port resource for port-based teleportation.
#[pyclass(name = "PortResource", module = "nlqc_py")]
struct PyPortResource(teleport::PortResource);

#[pymethods]
impl PyPortResource {
    #[new]
    #[pyo3(signature = (n_ports, n_a = 1))]
    fn new(n_ports: usize, n_a: usize) -> PyResult<Self> {
        teleport::PortResource::new(n_ports, n_a).map(PyPortResource).map_err(py_err)
    }

    #[getter]
    fn n_ports(&self) -> usize {
        self.0.n_ports()
    }

    #[getter]
    fn completeness_defect(&self) -> PyResult<f64> {
        Ok(self.0.pgm().map_err(py_err)?.completeness_defect)
    }

    fn average_fidelity_choi(&self) -> PyResult<f64> {
        teleport::pbt_average_fidelity_choi(&self.0).map_err(py_err)
    }

    fn average_fidelity_trajectories(&self) -> PyResult<f64> {
        teleport::pbt_average_fidelity_trajectories(&self.0).map_err(py_err)
    }

    #[pyo3(signature = (trials, seed = 0))]
    fn average_fidelity_sampled(&self, trials: usize, seed: u64) -> PyResult<f64> {
        teleport::pbt_average_fidelity_sampled(&self.0, trials, seed).map_err(py_err)
    }
}

/// Standard teleportation of a single-qubit state; returns `(outcome, fidelity)`.
#[pyfunction]
#[pyo3(signature = (amplitudes, seed = 0))]
fn teleport_normal(amplitudes: Vec<Complex64>, seed: u64) -> PyResult<(String, f64)> {
    let psi = state(amplitudes, vec![2])?;
    let bell = teleport::PortResource::bell(1).map_err(py_err)?;
    let t = teleport::teleport_normal(&psi, &bell, seed).map_err(py_err)?;
    let label = match t.outcome {
        teleport::Outcome::Pauli(p) => p,
        teleport::Outcome::Port(x) => x.to_string(),
    };
    Ok((label, t.fidelity))
}

/// Cascaded port-based teleportation of two single-qubit inputs.
#[pyfunction]
#[pyo3(signature = (psi_a, psi_b, n_ports, otp = true, seed = 0))]
fn cascade<'py>(
    py: Python<'py>,
    psi_a: Vec<Complex64>,
    psi_b: Vec<Complex64>,
    n_ports: usize,
    otp: bool,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let a = state(psi_a, vec![2])?;
    let b = state(psi_b, vec![2])?;
    let rep = teleport::run_appendix_d(&a, &b, n_ports, otp, seed).map_err(py_err)?;
    to_py(py, &rep)
}

/// Clifford toy protocol on `blocks` alternating Steane blocks with a random target.
#[pyfunction]
#[pyo3(signature = (blocks = 2, n_sites = 32, target_len = 20, seed = 0, fault = None))]
fn toy_protocol<'py>(
    py: Python<'py>,
    blocks: usize,
    n_sites: usize,
    target_len: usize,
    seed: u64,
    fault: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let fault = parse_fault(fault)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let word = random_clifford_circuit(blocks, target_len, &mut rng);
    let cfg = StackConfig::alternating(blocks, n_sites);
    let run = run_toy_protocol(&cfg, &word, &ToyInputs::Choi, fault).map_err(py_err)?;
    to_py(py, &run)
}

/// Additive error certificate; `physical` is an optional dict of parametric inputs.
#[pyfunction]
#[pyo3(signature = (eps_enc, eps_rec, eps_dyn, eps_spread, physical = None))]
fn compose_certificate<'py>(
    py: Python<'py>,
    eps_enc: f64,
    eps_rec: f64,
    eps_dyn: f64,
    eps_spread: f64,
    physical: Option<Bound<'py, PyAny>>,
) -> PyResult<Bound<'py, PyAny>> {
    let physical = match physical {
        Some(obj) => {
            let text: String = py.import("json")?.call_method1("dumps", (obj,))?.extract()?;
            Some(serde_json::from_str(&text).map_err(|e| PyValueError::new_err(e.to_string()))?)
        }
        None => None,
    };
    let cert = approxcode::compose_certificate(eps_enc, eps_rec, eps_dyn, eps_spread, physical).map_err(py_err)?;
    to_py(py, &cert)
}

#[pymodule]
pub fn nlqc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("NlqcError", m.py().get_type::<NlqcError>())?;
    m.add("LocalityError", m.py().get_type::<LocalityError>())?;
    m.add_class::<PyModel>()?;
    m.add_class::<PyLightConeFit>()?;
    m.add_class::<PyDecomposition>()?;
    m.add_class::<PyPortResource>()?;
    m.add_function(wrap_pyfunction!(teleport_normal, m)?)?;
    m.add_function(wrap_pyfunction!(cascade, m)?)?;
    m.add_function(wrap_pyfunction!(toy_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(compose_certificate, m)?)?;
    Ok(())
}
