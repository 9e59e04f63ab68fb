//! Python bindings: machines, kernels, predictions and the measurement
//! comparison.

use cachecycle_core as core;
use cachecycle_core::report::{self, MachinePredictions};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "Machine", module = "cachecycle", frozen, from_py_object)]
#[derive(Clone)]
struct Machine {
    inner: core::MachineDescriptor,
}

#[pymethods]
impl Machine {
    /// Parse the text of a machine file.
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        core::parse_machine(text).map(|inner| Machine { inner }).map_err(value_error)
    }

    /// One of the bundled machines: core2, nehalem, shanghai.
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        core::bundled::machine(name)
            .map(|inner| Machine { inner })
            .ok_or_else(|| value_error(format!("no bundled machine `{name}`")))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.inner.name
    }

    #[getter]
    fn clock_ghz(&self) -> f64 {
        self.inner.clock()
    }

    #[getter]
    fn cache_line_bytes(&self) -> u32 {
        self.inner.cache_line_bytes
    }

    #[getter]
    fn policy(&self) -> &'static str {
        self.inner.policy.keyword()
    }

    /// Level labels, innermost first, ending with "MEM".
    #[getter]
    fn levels(&self) -> Vec<String> {
        self.inner.level_refs().iter().map(|l| l.to_string()).collect()
    }

    fn memory_cycles_per_cacheline(&self) -> f64 {
        core::memory_cycles_per_cacheline(&self.inner)
    }

    fn to_machine_file(&self) -> String {
        self.inner.to_machine_file()
    }

    fn __repr__(&self) -> String {
        format!("Machine({:?})", self.inner.name)
    }
}

#[pyclass(name = "Kernel", module = "cachecycle", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct Kernel {
    name: String,
    read_streams: u32,
    write_streams: u32,
}

impl Kernel {
    fn descriptor(&self) -> PyResult<core::KernelDescriptor> {
        core::KernelDescriptor::new(self.name.clone(), self.read_streams, self.write_streams).map_err(value_error)
    }
}

impl From<core::KernelDescriptor> for Kernel {
    fn from(k: core::KernelDescriptor) -> Self {
        Kernel {
            name: k.name,
            read_streams: k.read_streams,
            write_streams: k.write_streams,
        }
    }
}

#[pymethods]
impl Kernel {
    #[new]
    fn new(name: String, read_streams: u32, write_streams: u32) -> PyResult<Self> {
        core::KernelDescriptor::new(name, read_streams, write_streams)
            .map(Kernel::from)
            .map_err(value_error)
    }

    fn __repr__(&self) -> String {
        format!("Kernel({:?}, {}, {})", self.name, self.read_streams, self.write_streams)
    }
}

#[pyclass(name = "Transfer", module = "cachecycle", frozen, get_all)]
struct Transfer {
    source: String,
    dest: String,
    cache_lines: u32,
    cycles: f64,
    role: String,
}

#[pyclass(name = "Prediction", module = "cachecycle", frozen, get_all)]
struct Prediction {
    machine: String,
    kernel: String,
    level: String,
    l1_cycles: f64,
    transfer_cycles: f64,
    total_cycles: f64,
    effective_bytes: u64,
    real_bytes: u64,
    real_gbs: f64,
    effective_gbs: f64,
    transfers: Vec<Py<Transfer>>,
}

#[pymethods]
impl Prediction {
    fn __repr__(&self) -> String {
        format!(
            "Prediction({} {} {}: {} cycles)",
            self.machine, self.kernel, self.level, self.total_cycles
        )
    }
}

fn to_py_prediction(py: Python<'_>, m: &core::MachineDescriptor, p: core::CyclePrediction) -> PyResult<Prediction> {
    let bw = core::predicted_bandwidths(&p, m.clock()).map_err(value_error)?;
    let transfers = p
        .transfers
        .iter()
        .map(|t| {
            Py::new(
                py,
                Transfer {
                    source: m.level_name(t.from),
                    dest: m.level_name(t.to),
                    cache_lines: t.cache_lines,
                    cycles: t.cycles,
                    role: t.role.to_string(),
                },
            )
        })
        .collect::<PyResult<_>>()?;
    Ok(Prediction {
        transfer_cycles: p.transfer_cycles(),
        machine: p.machine,
        kernel: p.kernel,
        level: p.level.to_string(),
        l1_cycles: p.l1_cycles,
        total_cycles: p.total_cycles,
        effective_bytes: p.effective_bytes,
        real_bytes: p.real_bytes,
        real_gbs: bw.real_gbs,
        effective_gbs: bw.effective_gbs,
        transfers,
    })
}

#[pyclass(name = "ComparisonRow", module = "cachecycle", frozen, get_all)]
struct ComparisonRow {
    machine: String,
    kernel: String,
    level: String,
    predicted_cycles: f64,
    measured_cycles: f64,
    efficiency_pct: f64,
    real_gbs: f64,
    effective_gbs: Option<f64>,
    flags: Vec<String>,
}

#[pymethods]
impl ComparisonRow {
    fn __repr__(&self) -> String {
        format!(
            "ComparisonRow({} {} {}: {:.1}%)",
            self.machine, self.kernel, self.level, self.efficiency_pct
        )
    }
}

/// Accepts a Kernel or a string such as "triad" or "mine:R3W1".
fn kernel_arg(obj: &Bound<'_, PyAny>) -> PyResult<core::KernelDescriptor> {
    if let Ok(k) = obj.cast::<Kernel>() {
        return k.get().descriptor();
    }
    let spec: String = obj.extract()?;
    core::resolve_kernel(&spec).map_err(value_error)
}

fn level_arg(m: &core::MachineDescriptor, label: &str) -> PyResult<core::LevelRef> {
    m.resolve_level(label)
        .ok_or_else(|| value_error(format!("machine `{}` has no level `{label}`", m.name)))
}

#[pyfunction]
fn bundled_machine_names() -> Vec<&'static str> {
    core::bundled::MACHINE_NAMES.to_vec()
}

#[pyfunction]
fn builtin_kernels() -> Vec<Kernel> {
    core::builtin_kernels().into_iter().map(Kernel::from).collect()
}

#[pyfunction]
fn kernel(spec: &str) -> PyResult<Kernel> {
    core::resolve_kernel(spec).map(Kernel::from).map_err(value_error)
}

#[pyfunction]
fn predict(py: Python<'_>, machine: &Machine, kernel: &Bound<'_, PyAny>, level: &str) -> PyResult<Prediction> {
    let m = &machine.inner;
    let k = kernel_arg(kernel)?;
    let p = core::predict(m, &k, level_arg(m, level)?).map_err(value_error)?;
    to_py_prediction(py, m, p)
}

/// One list per kernel, one prediction per level (L1 first).
#[pyfunction]
#[pyo3(signature = (machine, kernels=None))]
fn predict_table(
    py: Python<'_>,
    machine: &Machine,
    kernels: Option<Vec<Bound<'_, PyAny>>>,
) -> PyResult<Vec<Vec<Prediction>>> {
    let m = &machine.inner;
    let kernels = match kernels {
        Some(ks) => ks.iter().map(kernel_arg).collect::<PyResult<Vec<_>>>()?,
        None => core::builtin_kernels(),
    };
    core::predict_table(m, &kernels)
        .into_iter()
        .map(|row| row.into_iter().map(|p| to_py_prediction(py, m, p)).collect())
        .collect()
}

/// Aligned cycle table for several machines, as printed by the CLI.
#[pyfunction]
fn cycle_table(machines: Vec<Machine>) -> PyResult<String> {
    let kernels = core::builtin_kernels();
    let sets = machines
        .iter()
        .map(|m| {
            let predictions = core::predict_table(&m.inner, &kernels).into_iter().flatten().collect();
            MachinePredictions { machine: &m.inner, predictions }
        })
        .collect::<Vec<_>>();
    Ok(report::cycle_table(&sets))
}

/// Compares measurement CSV text against model predictions.
#[pyfunction]
fn compare(machines: Vec<Machine>, csv_text: &str) -> PyResult<Vec<ComparisonRow>> {
    let machines: Vec<_> = machines.into_iter().map(|m| m.inner).collect();
    let records = core::parse_measurements(csv_text, &machines).map_err(value_error)?;
    let mut preds = Vec::new();
    for r in records.iter().filter(|r| r.threads == 1) {
        let m = machines.iter().find(|m| m.name == r.machine).expect("parser checked machine names");
        let k = core::resolve_kernel(&r.kernel).map_err(value_error)?;
        preds.push(core::predict(m, &k, r.level).map_err(value_error)?);
    }
    let rows = core::compare(&preds, &records, &machines).map_err(value_error)?;
    Ok(rows
        .into_iter()
        .map(|r| ComparisonRow {
            machine: r.machine,
            kernel: r.kernel,
            level: r.level.to_string(),
            predicted_cycles: r.predicted_cycles,
            measured_cycles: r.measured_cycles,
            efficiency_pct: r.efficiency_pct,
            real_gbs: r.real_gbs,
            effective_gbs: r.effective_gbs,
            flags: r.flags.iter().map(|f| f.to_string()).collect(),
        })
        .collect())
}

/// The bundled single-thread measurement fixture as CSV text.
#[pyfunction]
fn measurement_fixture() -> &'static str {
    core::bundled::SINGLE_THREAD_MEASUREMENTS
}

/// Bytes per stream the benchmark would allocate to keep `kernel` in `level`.
#[pyfunction]
fn size_for_level(machine: &Machine, level: &str, kernel: &Bound<'_, PyAny>) -> PyResult<u64> {
    let m = &machine.inner;
    core::bench::size_for_level(m, level_arg(m, level)?, &kernel_arg(kernel)?).map_err(value_error)
}

#[pymodule]
fn cachecycle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Machine>()?;
    m.add_class::<Kernel>()?;
    m.add_class::<Transfer>()?;
    m.add_class::<Prediction>()?;
    m.add_class::<ComparisonRow>()?;
    m.add_function(wrap_pyfunction!(bundled_machine_names, m)?)?;
    m.add_function(wrap_pyfunction!(builtin_kernels, m)?)?;
    m.add_function(wrap_pyfunction!(kernel, m)?)?;
    m.add_function(wrap_pyfunction!(predict, m)?)?;
    m.add_function(wrap_pyfunction!(predict_table, m)?)?;
    m.add_function(wrap_pyfunction!(cycle_table, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(measurement_fixture, m)?)?;
    m.add_function(wrap_pyfunction!(size_for_level, m)?)?;
    Ok(())
}
