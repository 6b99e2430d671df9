//! C ABI for the kawaguchi crate.
//!
//! Conventions:
//! - `KgModel` and `KgSurface` are opaque handles; create/free in pairs.
//! - functions return [`KgStatus`]; on any non-OK status the thread-local message
//!   from [`kg_last_error`] describes the failure (valid until the next call on the
//!   same thread);
//! - strings returned through `char**` out-parameters are owned by the caller and
//!   must be released with [`kg_string_free`];
//! - all pointers must be valid for the duration of the call; null handles are
//!   reported as `KG_STATUS_NULL_POINTER`.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, c_double, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use kawaguchi::catalog;
use kawaguchi::kform::KawaguchiForm;
use kawaguchi::model_file::ModelFile;
use kawaguchi::multivector::Dims;
use kawaguchi::noether::{conservation_divergence, BTerm, NoetherCurrent, VectorField};
use kawaguchi::report::{run_model_checks, GridMeta, NoetherReport, ResidualReport, SolveReport};
use kawaguchi::surface::{Surface, SurfaceDescriptor};
use kawaguchi::variational::{el_residual, el_residual_expanded, solve_el, SolveOptions};
use kawaguchi::Error;

/// Call outcome. Mirrors the CLI exit codes for the shared failure classes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum KgStatus {
    Ok = 0,
    CheckFailed = 1,
    InputError = 2,
    SolverDiverged = 3,
    NullPointer = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    let sanitized: String = msg.chars().filter(|c| *c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(sanitized).unwrap());
}

fn status_of(e: &Error) -> KgStatus {
    match e {
        Error::SolverDiverged(_) => KgStatus::SolverDiverged,
        _ => KgStatus::InputError,
    }
}

/// Model handle: the form plus named symmetry generators.
pub struct KgModel {
    form: KawaguchiForm,
    killing: Vec<(String, VectorField, BTerm)>,
    name: String,
}

/// Surface handle.
pub struct KgSurface {
    inner: Surface,
}

fn guarded<F: FnOnce() -> KgStatus>(f: F) -> KgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(st) => st,
        Err(_) => {
            set_error("internal panic");
            KgStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Option<&'a str> {
    if p.is_null() {
        return None;
    }
    CStr::from_ptr(p).to_str().ok()
}

fn hand_out_string(out: *mut *mut c_char, text: String) -> KgStatus {
    if out.is_null() {
        set_error("null output pointer");
        return KgStatus::NullPointer;
    }
    let c = match CString::new(text) {
        Ok(c) => c,
        Err(_) => {
            set_error("report contained NUL byte");
            return KgStatus::InputError;
        }
    };
    unsafe { *out = c.into_raw() };
    KgStatus::Ok
}

/// Last error message for this thread. The pointer stays valid until the next
/// FFI call on the same thread; do not free it.
#[no_mangle]
pub extern "C" fn kg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Free a string returned through a `char**` out-parameter.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn kg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

fn build_model_from_spec(spec: &str) -> Result<KgModel, Error> {
    // builtin specs only here; files go through kg_model_from_text
    let (name, args) = match spec.find('(') {
        None => (spec.trim().to_string(), BTreeMap::new()),
        Some(p) => {
            let inner = spec[p + 1..]
                .strip_suffix(')')
                .ok_or_else(|| Error::BadParameter("unbalanced parentheses".into()))?;
            let mut args = BTreeMap::new();
            let mut depth = 0usize;
            let mut start = 0usize;
            let bytes = inner.as_bytes();
            let mut pieces = Vec::new();
            for (i, &b) in bytes.iter().enumerate() {
                match b {
                    b'[' | b'(' => depth += 1,
                    b']' | b')' => depth = depth.saturating_sub(1),
                    b',' if depth == 0 => {
                        pieces.push(&inner[start..i]);
                        start = i + 1;
                    }
                    _ => {}
                }
            }
            pieces.push(&inner[start..]);
            for piece in pieces {
                let piece = piece.trim();
                if piece.is_empty() {
                    continue;
                }
                let (k, v) = piece
                    .split_once('=')
                    .ok_or_else(|| Error::BadParameter(format!("bad argument '{piece}'")))?;
                args.insert(k.trim().to_string(), v.trim().to_string());
            }
            (spec[..p].trim().to_string(), args)
        }
    };
    let entry = catalog::builtin(&name, &args)?;
    Ok(KgModel {
        form: entry.form,
        killing: entry
            .killing
            .into_iter()
            .map(|k| (k.name, k.field, k.b))
            .collect(),
        name: entry.name,
    })
}

/// Create a builtin model from a spec like `"maxwell"` or `"nambu_goto(N=3)"`.
/// Returns null on error (see [`kg_last_error`]).
///
/// # Safety
/// `spec` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kg_model_builtin(spec: *const c_char) -> *mut KgModel {
    let mut out: *mut KgModel = std::ptr::null_mut();
    guarded(|| {
        let Some(spec) = (unsafe { cstr(spec) }) else {
            set_error("null or non-UTF8 spec");
            return KgStatus::NullPointer;
        };
        match build_model_from_spec(spec) {
            Ok(m) => {
                out = Box::into_raw(Box::new(m));
                KgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    });
    out
}

/// Create a model from model-file text (see the model file format docs).
/// Returns null on error.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kg_model_from_text(text: *const c_char) -> *mut KgModel {
    let mut out: *mut KgModel = std::ptr::null_mut();
    guarded(|| {
        let Some(text) = (unsafe { cstr(text) }) else {
            set_error("null or non-UTF8 text");
            return KgStatus::NullPointer;
        };
        let build = || -> Result<KgModel, Error> {
            let mf = ModelFile::parse(text)?;
            let loaded = mf.load()?;
            let mut killing = Vec::new();
            for (name, field) in loaded.vectors {
                let b = loaded
                    .bterms
                    .iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, b)| b.clone())
                    .unwrap_or_else(|| BTerm::zero(field.dims()));
                killing.push((name, field, b));
            }
            Ok(KgModel {
                form: loaded.form,
                killing,
                name: "model".into(),
            })
        };
        match build() {
            Ok(m) => {
                out = Box::into_raw(Box::new(m));
                KgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    });
    out
}

/// # Safety
/// `model` must come from `kg_model_builtin`/`kg_model_from_text`, once.
#[no_mangle]
pub unsafe extern "C" fn kg_model_free(model: *mut KgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of coordinates (N+1) of the model's manifold.
///
/// # Safety
/// `model` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn kg_model_coord_count(model: *const KgModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.form.dims().coord_count
}

/// Surface dimension n+1 (the Plücker degree).
///
/// # Safety
/// `model` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn kg_model_degree(model: *const KgModel) -> usize {
    if model.is_null() {
        return 0;
    }
    unsafe { &*model }.form.dims().degree
}

/// Run the standard model checks (homogeneity, Euler identity, Plücker relations,
/// Killing list) and hand back the JSON report. `KG_STATUS_CHECK_FAILED` means the
/// checks ran and at least one failed.
///
/// # Safety
/// `model` must be a live handle; `out_json` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kg_model_check_json(
    model: *const KgModel,
    samples: usize,
    seed: u64,
    out_json: *mut *mut c_char,
) -> KgStatus {
    guarded(|| {
        if model.is_null() {
            set_error("null model");
            return KgStatus::NullPointer;
        }
        let m = unsafe { &*model };
        match run_model_checks(&m.name, &m.form, &m.killing, samples, seed) {
            Ok(report) => {
                let st = hand_out_string(out_json, serde_json::to_string(&report).unwrap());
                if st != KgStatus::Ok {
                    return st;
                }
                if report.pass {
                    KgStatus::Ok
                } else {
                    set_error("one or more checks failed");
                    KgStatus::CheckFailed
                }
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Build a surface from raw node data. `shape`/`spacing`/`origin` have `degree`
/// entries; `values` is node-major (`node * coord_count + mu`, last parameter index
/// fastest) with `coord_count * Π shape` entries.
///
/// # Safety
/// All pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn kg_surface_from_data(
    coord_count: usize,
    degree: usize,
    shape: *const usize,
    spacing: *const c_double,
    origin: *const c_double,
    values: *const c_double,
    values_len: usize,
) -> *mut KgSurface {
    let mut out: *mut KgSurface = std::ptr::null_mut();
    guarded(|| {
        if shape.is_null() || spacing.is_null() || origin.is_null() || values.is_null() {
            set_error("null array pointer");
            return KgStatus::NullPointer;
        }
        if degree == 0 || coord_count < degree {
            set_error("need coord_count >= degree >= 1");
            return KgStatus::InputError;
        }
        let shape = std::slice::from_raw_parts(shape, degree).to_vec();
        let spacing = std::slice::from_raw_parts(spacing, degree).to_vec();
        let origin = std::slice::from_raw_parts(origin, degree).to_vec();
        let node_count: usize = shape.iter().product();
        if values_len != node_count * coord_count {
            set_error("values length does not match shape * coord_count");
            return KgStatus::InputError;
        }
        if shape.iter().any(|m| *m < 2) || spacing.iter().any(|h| *h <= 0.0) {
            set_error("shape entries must be >= 2 and spacings positive");
            return KgStatus::InputError;
        }
        let values = std::slice::from_raw_parts(values, values_len).to_vec();
        let dims = Dims::new(coord_count, degree);
        let mut surface = Surface::from_fn(dims, &shape, &spacing, &origin, |_s, x| x.fill(0.0));
        surface.values_mut().copy_from_slice(&values);
        out = Box::into_raw(Box::new(KgSurface { inner: surface }));
        KgStatus::Ok
    });
    out
}

/// Read a surface from a CSV file plus its JSON descriptor. Returns null on error.
///
/// # Safety
/// Both paths must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kg_surface_read_csv(
    csv_path: *const c_char,
    descriptor_path: *const c_char,
) -> *mut KgSurface {
    let mut out: *mut KgSurface = std::ptr::null_mut();
    guarded(|| {
        let (Some(csv), Some(desc)) = (unsafe { cstr(csv_path) }, unsafe { cstr(descriptor_path) })
        else {
            set_error("null or non-UTF8 path");
            return KgStatus::NullPointer;
        };
        let read = || -> Result<Surface, Error> {
            let desc_text = std::fs::read_to_string(desc)
                .map_err(|e| Error::SurfaceFile(format!("{desc}: {e}")))?;
            let desc: SurfaceDescriptor = serde_json::from_str(&desc_text)
                .map_err(|e| Error::SurfaceFile(e.to_string()))?;
            let f = File::open(csv).map_err(|e| Error::SurfaceFile(format!("{csv}: {e}")))?;
            Surface::read_csv(&mut BufReader::new(f), &desc)
        };
        match read() {
            Ok(s) => {
                out = Box::into_raw(Box::new(KgSurface { inner: s }));
                KgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    });
    out
}

/// Write a surface as CSV plus descriptor JSON.
///
/// # Safety
/// `surface` must be a live handle; both paths valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn kg_surface_write_csv(
    surface: *const KgSurface,
    csv_path: *const c_char,
    descriptor_path: *const c_char,
) -> KgStatus {
    guarded(|| {
        if surface.is_null() {
            set_error("null surface");
            return KgStatus::NullPointer;
        }
        let (Some(csv), Some(desc)) = (unsafe { cstr(csv_path) }, unsafe { cstr(descriptor_path) })
        else {
            set_error("null or non-UTF8 path");
            return KgStatus::NullPointer;
        };
        let s = unsafe { &*surface };
        let write = || -> Result<(), Error> {
            let f = File::create(Path::new(csv))
                .map_err(|e| Error::SurfaceFile(format!("{csv}: {e}")))?;
            let mut w = BufWriter::new(f);
            s.inner
                .write_csv(&mut w)
                .map_err(|e| Error::SurfaceFile(e.to_string()))?;
            let dtext = serde_json::to_string_pretty(&s.inner.descriptor()).unwrap();
            std::fs::write(desc, dtext).map_err(|e| Error::SurfaceFile(format!("{desc}: {e}")))?;
            Ok(())
        };
        match write() {
            Ok(()) => KgStatus::Ok,
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// # Safety
/// `surface` must come from a `kg_surface_*` constructor, once.
#[no_mangle]
pub unsafe extern "C" fn kg_surface_free(surface: *mut KgSurface) {
    if !surface.is_null() {
        drop(Box::from_raw(surface));
    }
}

/// # Safety
/// `surface` must be a live handle from this library (or null).
#[no_mangle]
pub unsafe extern "C" fn kg_surface_node_count(surface: *const KgSurface) -> usize {
    if surface.is_null() {
        return 0;
    }
    unsafe { &*surface }.inner.node_count()
}

/// Copy node values into `out` (length `node_count * coord_count`).
///
/// # Safety
/// `out` must reference an array of at least `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn kg_surface_values(
    surface: *const KgSurface,
    out: *mut c_double,
    out_len: usize,
) -> KgStatus {
    guarded(|| {
        if surface.is_null() || out.is_null() {
            set_error("null pointer");
            return KgStatus::NullPointer;
        }
        let s = unsafe { &*surface };
        let vals = s.inner.values();
        if out_len < vals.len() {
            set_error("output buffer too small");
            return KgStatus::InputError;
        }
        std::slice::from_raw_parts_mut(out, vals.len()).copy_from_slice(vals);
        KgStatus::Ok
    })
}

/// Discrete action of the surface under the model's form.
///
/// # Safety
/// `model` and `surface` must be live handles; `out_action` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kg_action(
    model: *const KgModel,
    surface: *const KgSurface,
    out_action: *mut c_double,
) -> KgStatus {
    guarded(|| {
        if model.is_null() || surface.is_null() || out_action.is_null() {
            set_error("null pointer");
            return KgStatus::NullPointer;
        }
        let m = unsafe { &*model };
        let s = unsafe { &*surface };
        match s.inner.discrete_action(&m.form) {
            Ok(a) => {
                unsafe { *out_action = a };
                KgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Euler-Lagrange residual norms and report JSON. `expanded != 0` selects the
/// second-derivative discretization.
///
/// # Safety
/// `model` and `surface` must be live handles; `out_json` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn kg_residual_json(
    model: *const KgModel,
    surface: *const KgSurface,
    expanded: i32,
    out_json: *mut *mut c_char,
) -> KgStatus {
    guarded(|| {
        if model.is_null() || surface.is_null() {
            set_error("null pointer");
            return KgStatus::NullPointer;
        }
        let m = unsafe { &*model };
        let s = unsafe { &*surface };
        let run = || -> Result<String, Error> {
            let field = if expanded != 0 {
                el_residual_expanded(&m.form, &s.inner, 1e-6)?
            } else {
                el_residual(&m.form, &s.inner)?
            };
            let report = ResidualReport::new(&m.name, &s.inner, &field, expanded != 0);
            Ok(serde_json::to_string(&report).unwrap())
        };
        match run() {
            Ok(json) => hand_out_string(out_json, json),
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Damped Newton solve over the given free coordinate components (fiber components
/// when `free_coords` is null/empty). On success `*out_surface` holds the solved
/// surface and `*out_json` the convergence report.
///
/// # Safety
/// `free_coords`, when non-null, must reference `free_len` entries.
#[no_mangle]
pub unsafe extern "C" fn kg_solve(
    model: *const KgModel,
    surface: *const KgSurface,
    free_coords: *const usize,
    free_len: usize,
    tolerance: c_double,
    max_iterations: usize,
    out_surface: *mut *mut KgSurface,
    out_json: *mut *mut c_char,
) -> KgStatus {
    guarded(|| {
        if model.is_null() || surface.is_null() || out_surface.is_null() {
            set_error("null pointer");
            return KgStatus::NullPointer;
        }
        let m = unsafe { &*model };
        let s = unsafe { &*surface };
        let dims = m.form.dims();
        let free: Vec<usize> = if free_coords.is_null() || free_len == 0 {
            (dims.degree..dims.coord_count).collect()
        } else {
            std::slice::from_raw_parts(free_coords, free_len).to_vec()
        };
        let opts = SolveOptions {
            tolerance,
            max_iterations,
            ..Default::default()
        };
        match solve_el(&m.form, &s.inner, &free, &opts) {
            Ok((solved, convergence)) => {
                let report = SolveReport {
                    model: m.name.clone(),
                    grid: GridMeta::of(&solved),
                    free_coords: free,
                    convergence,
                };
                unsafe { *out_surface = Box::into_raw(Box::new(KgSurface { inner: solved })) };
                if !out_json.is_null() {
                    return hand_out_string(out_json, serde_json::to_string(&report).unwrap());
                }
                KgStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}

/// Nöther-current conservation diagnostic for a named model symmetry: pulls the
/// current back to the surface, applies the discrete exterior derivative and
/// reports interior norms as JSON.
///
/// # Safety
/// Handles must be live; `vector_name` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn kg_noether_divergence_json(
    model: *const KgModel,
    vector_name: *const c_char,
    surface: *const KgSurface,
    out_json: *mut *mut c_char,
) -> KgStatus {
    guarded(|| {
        if model.is_null() || surface.is_null() {
            set_error("null pointer");
            return KgStatus::NullPointer;
        }
        let Some(vname) = (unsafe { cstr(vector_name) }) else {
            set_error("null or non-UTF8 vector name");
            return KgStatus::NullPointer;
        };
        let m = unsafe { &*model };
        let s = unsafe { &*surface };
        let run = || -> Result<String, Error> {
            let (name, field, b) = m
                .killing
                .iter()
                .find(|(n, _, _)| n == vname)
                .ok_or_else(|| Error::BadParameter(format!("no vector '{vname}'")))?;
            let current = NoetherCurrent::new(&m.form, field, b)?;
            let (_, _, divergence) = conservation_divergence(&current, &s.inner)?;
            let report = NoetherReport {
                model: m.name.clone(),
                vector: name.clone(),
                grid: GridMeta::of(&s.inner),
                divergence,
            };
            Ok(serde_json::to_string(&report).unwrap())
        };
        match run() {
            Ok(json) => hand_out_string(out_json, json),
            Err(e) => {
                set_error(&e.to_string());
                status_of(&e)
            }
        }
    })
}
