//! C ABI over `clique_core`.
//!
//! A simulation lives behind an opaque `CliqueSim` handle. Every fallible
//! call returns a `CliqueStatus`; on failure the message is available from
//! `clique_last_error_message` on the same thread until the next failing call.
//! Strings returned by the library are freed with `clique_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use clique_core::sim::{self, ChurnEvent, NetworkState, SimOptions, StopWhen};
use clique_core::topology::{self, IdScheme, InitialStateSpec, TopologyKind};
use clique_core::{verify, Error, NodeId};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliqueStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    FalseIdentifier = 4,
    InvalidState = 5,
    Event = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliqueIdScheme {
    Dense = 0,
    SparseRandom = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CliqueStopWhen {
    Legal = 0,
    Valid = 1,
    OneHeap = 2,
    Never = 3,
}

/// Opaque simulation handle.
pub struct CliqueSim {
    net: NetworkState,
    opts: SimOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> CliqueStatus {
    match err {
        Error::Config(_) => CliqueStatus::InvalidArgument,
        Error::Event(_) => CliqueStatus::Event,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) => CliqueStatus::Parse,
        Error::FalseIdentifier { .. } => CliqueStatus::FalseIdentifier,
        Error::InvalidState(_) | Error::InvalidForest(_) => CliqueStatus::InvalidState,
        Error::Io(_) => CliqueStatus::Io,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

/// Runs `f`, turning errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CliqueStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CliqueStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CliqueStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            CliqueStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            CliqueStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn sim_ref<'a>(p: *const CliqueSim) -> Result<&'a CliqueSim, Fail> {
    p.as_ref().ok_or(Fail::Null("sim"))
}

unsafe fn sim_mut<'a>(p: *mut CliqueSim) -> Result<&'a mut CliqueSim, Fail> {
    p.as_mut().ok_or(Fail::Null("sim"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    out.write(v);
    Ok(())
}

fn boxed(net: NetworkState) -> *mut CliqueSim {
    Box::into_raw(Box::new(CliqueSim {
        net,
        opts: SimOptions::default(),
    }))
}

/// Generates an initial state. `kind` uses the CLI syntax, e.g. `"line"` or
/// `"heap-forest:3"`.
///
/// # Safety
/// `kind` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_new(
    kind: *const c_char,
    n: usize,
    seed: u64,
    id_scheme: CliqueIdScheme,
    out: *mut *mut CliqueSim,
) -> CliqueStatus {
    guard(|| {
        let kind: TopologyKind = str_arg(kind, "kind")?.parse()?;
        let spec = InitialStateSpec {
            kind,
            n,
            seed,
            id_scheme: match id_scheme {
                CliqueIdScheme::Dense => IdScheme::Dense,
                CliqueIdScheme::SparseRandom => IdScheme::SparseRandom,
            },
        };
        let net = topology::generate(&spec)?;
        write_out(out, boxed(net))
    })
}

/// Loads a state document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_load_json(json: *const c_char, out: *mut *mut CliqueSim) -> CliqueStatus {
    guard(|| {
        let net = topology::load(str_arg(json, "json")?)?;
        write_out(out, boxed(net))
    })
}

/// # Safety
/// `sim` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_free(sim: *mut CliqueSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Zero for canonical inbox order, otherwise the shuffle seed.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_set_fuzz_seed(sim: *mut CliqueSim, seed: u64) -> CliqueStatus {
    guard(|| {
        sim_mut(sim)?.opts.fuzz_msg_order = (seed != 0).then_some(seed);
        Ok(())
    })
}

/// Executes `rounds` synchronous rounds.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_step(sim: *mut CliqueSim, rounds: u64) -> CliqueStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        for _ in 0..rounds {
            s.net.step(&s.opts);
        }
        Ok(())
    })
}

/// Steps until `stop_when` holds or `max_rounds` have run. `out_converged`
/// is set to whether the predicate was reached; either out pointer may be null.
///
/// # Safety
/// `sim` must be a live handle; non-null out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_run(
    sim: *mut CliqueSim,
    max_rounds: u64,
    stop_when: CliqueStopWhen,
    out_round: *mut u64,
    out_converged: *mut bool,
) -> CliqueStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        let stop = match stop_when {
            CliqueStopWhen::Legal => StopWhen::Legal,
            CliqueStopWhen::Valid => StopWhen::Valid,
            CliqueStopWhen::OneHeap => StopWhen::OneHeap,
            CliqueStopWhen::Never => StopWhen::Never,
        };
        let res = sim::run(s.net.clone(), max_rounds, stop, &[], &s.opts)?;
        s.net = res.net;
        if !out_round.is_null() {
            out_round.write(s.net.round);
        }
        if !out_converged.is_null() {
            out_converged.write(res.stopped_at.is_some());
        }
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_is_legal(sim: *const CliqueSim, out: *mut bool) -> CliqueStatus {
    guard(|| write_out(out, verify::is_legal(&sim_ref(sim)?.net)))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_is_valid(sim: *const CliqueSim, out: *mut bool) -> CliqueStatus {
    guard(|| write_out(out, verify::is_valid(&sim_ref(sim)?.net)))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_num_heaps(sim: *const CliqueSim, out: *mut usize) -> CliqueStatus {
    guard(|| write_out(out, verify::num_heaps(&sim_ref(sim)?.net)))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_round(sim: *const CliqueSim, out: *mut u64) -> CliqueStatus {
    guard(|| write_out(out, sim_ref(sim)?.net.round))
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_num_nodes(sim: *const CliqueSim, out: *mut usize) -> CliqueStatus {
    guard(|| write_out(out, sim_ref(sim)?.net.len()))
}

/// Adds `new_id` knowing only `contact`, effective immediately.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_join(sim: *mut CliqueSim, new_id: u64, contact: u64) -> CliqueStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        s.net
            .apply_event(&ChurnEvent::join(s.net.round, NodeId(new_id), NodeId(contact)))?;
        Ok(())
    })
}

/// Removes `id` and purges every reference to it.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_leave(sim: *mut CliqueSim, id: u64) -> CliqueStatus {
    guard(|| {
        let s = sim_mut(sim)?;
        s.net.apply_event(&ChurnEvent::leave(s.net.round, NodeId(id)))?;
        Ok(())
    })
}

/// Serializes the state as a JSON document. Free with `clique_string_free`.
///
/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn clique_sim_dump_json(sim: *const CliqueSim, out: *mut *mut c_char) -> CliqueStatus {
    guard(|| {
        let text = topology::save(&sim_ref(sim)?.net);
        let c = CString::new(text).map_err(|e| Fail::Arg(e.to_string()))?;
        write_out(out, c.into_raw())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn clique_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn clique_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
