//! C ABI over the legalbot engine.
//!
//! Handles are opaque. Every fallible call returns an [`LbStatus`]; on failure
//! the message is kept per thread and read back with [`lb_last_error`].
//! Strings handed out by the library are NUL-terminated UTF-8 JSON and must be
//! released with [`lb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use legalbot::dialog::split_response;
use legalbot::model::parse_manifest;
use legalbot::service::{ApiReply, TurnTrace};
use legalbot::{load_manifest, Engine, ResponseTable, SessionState};

/// Result of every fallible call. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Config = 4,
    Engine = 5,
    Panic = 6,
}

/// Loaded engine. Shared by any number of sessions; safe to use from several threads.
pub struct LbEngine {
    engine: Arc<Engine>,
}

/// One conversation. Not thread safe: use a session from one thread at a time.
pub struct LbSession {
    engine: Arc<Engine>,
    state: SessionState,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LbStatus, String);

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure(LbStatus::Config, e.to_string())
    }
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            LbStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            LbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(LbStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(LbStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(LbStatus::NullArgument, "output pointer is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn write_json(out: *mut *mut c_char, value: &impl serde::Serialize) -> Result<(), Failure> {
    let text = serde_json::to_string(value).map_err(|e| Failure(LbStatus::Engine, e.to_string()))?;
    // serde_json escapes control characters, so there is no interior NUL.
    *out = CString::new(text).expect("json has no NUL").into_raw();
    Ok(())
}

unsafe fn hand_out_engine(out: *mut *mut LbEngine, engine: Engine) {
    *out = Box::into_raw(Box::new(LbEngine {
        engine: Arc::new(engine),
    }));
}

/// Loads a manifest (JSON) and a response table (CSV) from disk.
///
/// # Safety
/// Paths must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lb_engine_load(
    manifest_path: *const c_char,
    responses_path: *const c_char,
    out: *mut *mut LbEngine,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let manifest_path = str_arg(manifest_path, "manifest_path")?;
        let responses_path = str_arg(responses_path, "responses_path")?;
        let manifest = load_manifest(Path::new(manifest_path)).map_err(|e| match e {
            legalbot::ManifestError::Io { .. } => Failure(LbStatus::Io, e.to_string()),
            e => Failure::config(e),
        })?;
        let responses = ResponseTable::load(Path::new(responses_path)).map_err(Failure::config)?;
        hand_out_engine(out, Engine::new(manifest, responses).map_err(Failure::config)?);
        Ok(())
    })
}

/// Same as [`lb_engine_load`] but from the file contents.
///
/// # Safety
/// Inputs must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lb_engine_from_strings(
    manifest_json: *const c_char,
    responses_csv: *const c_char,
    out: *mut *mut LbEngine,
) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let manifest = parse_manifest(str_arg(manifest_json, "manifest_json")?).map_err(Failure::config)?;
        let responses = ResponseTable::parse_csv(str_arg(responses_csv, "responses_csv")?).map_err(Failure::config)?;
        hand_out_engine(out, Engine::new(manifest, responses).map_err(Failure::config)?);
        Ok(())
    })
}

/// Releases an engine. Sessions opened on it stay usable.
///
/// # Safety
/// `engine` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lb_engine_free(engine: *mut LbEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Resolves an utterance through the bot tree without touching any session.
/// Writes `{"bot","intent","confidence","fallback"}`.
///
/// # Safety
/// `engine` must be live; `text` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lb_classify(
    engine: *const LbEngine,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> LbStatus {
    guard(|| {
        out_arg(out_json)?;
        let engine = engine
            .as_ref()
            .ok_or_else(|| Failure(LbStatus::NullArgument, "engine is null".into()))?;
        let r = engine.engine.resolve(str_arg(text, "text")?);
        write_json(
            out_json,
            &serde_json::json!({
                "bot": r.intent.bot,
                "intent": r.intent.intent,
                "confidence": r.confidence,
                "fallback": r.fallback,
            }),
        )
    })
}

/// Opens a fresh session on `engine`.
///
/// # Safety
/// `engine` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lb_session_new(engine: *const LbEngine, out: *mut *mut LbSession) -> LbStatus {
    guard(|| {
        out_arg(out)?;
        let engine = engine
            .as_ref()
            .ok_or_else(|| Failure(LbStatus::NullArgument, "engine is null".into()))?;
        let state = engine.engine.start_session();
        *out = Box::into_raw(Box::new(LbSession {
            engine: Arc::clone(&engine.engine),
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `session` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lb_session_free(session: *mut LbSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Plays one user turn. Writes the reply in the same shape as the HTTP API
/// with the trace attached: `{"messages","buttons"?,"end_of_flow","trace"}`.
///
/// # Safety
/// `session` must be live and not used concurrently; `text` NUL-terminated;
/// `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lb_session_send(
    session: *mut LbSession,
    text: *const c_char,
    out_json: *mut *mut c_char,
) -> LbStatus {
    guard(|| {
        out_arg(out_json)?;
        let session = session
            .as_mut()
            .ok_or_else(|| Failure(LbStatus::NullArgument, "session is null".into()))?;
        let text = str_arg(text, "text")?;
        let turn = session
            .engine
            .handle_turn(&mut session.state, text)
            .map_err(|e| Failure(LbStatus::Engine, e.to_string()))?;
        let trace = TurnTrace::new(&turn, &session.state);
        write_json(
            out_json,
            &ApiReply {
                response: turn.response,
                trace: Some(trace),
            },
        )
    })
}

/// Writes the full session state as JSON.
///
/// # Safety
/// `session` must be live; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lb_session_state(session: *const LbSession, out_json: *mut *mut c_char) -> LbStatus {
    guard(|| {
        out_arg(out_json)?;
        let session = session
            .as_ref()
            .ok_or_else(|| Failure(LbStatus::NullArgument, "session is null".into()))?;
        write_json(out_json, &session.state)
    })
}

/// Splits a long reply into chat-sized messages. Writes a JSON array of strings.
///
/// # Safety
/// `text` NUL-terminated; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn lb_split_response(text: *const c_char, out_json: *mut *mut c_char) -> LbStatus {
    guard(|| {
        out_arg(out_json)?;
        write_json(out_json, &split_response(str_arg(text, "text")?))
    })
}

/// # Safety
/// `s` must come from this library and not be freed twice. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn lb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn lb_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn lb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
