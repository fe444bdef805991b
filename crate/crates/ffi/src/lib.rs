//! C ABI over the viseme decoding engine.
//!
//! Handles are opaque. Every function returns a [`VdStatus`]; on failure a
//! message is available from [`vd_last_error_message`] on the same thread.
//! Strings returned through out-pointers are owned by the caller and must be
//! released with [`vd_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_uint, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use viseme_decode::engine::{format_sentence_visemes, parse_viseme_line};
use viseme_decode::lexicon::normalize_tokens;
use viseme_decode::metrics::wer_counts;
use viseme_decode::scorer::{DEFAULT_K, DEFAULT_ORDER};
use viseme_decode::{artifact, DecodeError, DecodeOptions, Engine, LexiconError, NgramModel, Scenario, Scorer};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    OutOfVocabulary = 5,
    NoSegmentation = 6,
    CapExceeded = 7,
    Scorer = 8,
    InvalidArgument = 9,
    Panic = 10,
}

/// Decoding scenario: known or unknown word boundaries.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VdScenario {
    Segmented = 1,
    Unsegmented = 2,
}

/// Opaque engine handle: index plus an n-gram scorer.
pub struct VdEngine {
    engine: Engine,
    model: NgramModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (VdStatus, String);

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> VdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            VdStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VdStatus::Panic
        }
    }
}

unsafe fn required<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((VdStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (VdStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn optional<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        required(p, name).map(Some)
    }
}

fn read(path: &str) -> Result<String, Failure> {
    std::fs::read_to_string(Path::new(path)).map_err(|e| (VdStatus::Io, format!("cannot read {path}: {e}")))
}

fn train(corpus_path: &str) -> Result<NgramModel, Failure> {
    NgramModel::train(&read(corpus_path)?, DEFAULT_ORDER, DEFAULT_K)
        .map_err(|e| (VdStatus::Parse, format!("{corpus_path}: {e}")))
}

fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| (VdStatus::InvalidArgument, "output contains NUL".into()))?;
    unsafe { *out = c.into_raw() };
    Ok(())
}

fn scenario(s: c_uint) -> Result<Scenario, Failure> {
    u8::try_from(s)
        .ok()
        .and_then(Scenario::from_number)
        .ok_or((VdStatus::InvalidArgument, format!("scenario must be 1 or 2, got {s}")))
}

fn decode_status(e: &DecodeError) -> VdStatus {
    match e {
        DecodeError::EmptyInput | DecodeError::InvalidBeamWidth => VdStatus::InvalidArgument,
        DecodeError::EmptyCluster(_) | DecodeError::NoSegmentation => VdStatus::NoSegmentation,
        DecodeError::CapExceeded(_) => VdStatus::CapExceeded,
        DecodeError::Scorer(_) => VdStatus::Scorer,
    }
}

fn store_engine(out: *mut *mut VdEngine, engine: VdEngine) {
    unsafe { *out = Box::into_raw(Box::new(engine)) };
}

/// Build an engine from a pronouncing dictionary, optional rank and map
/// files, and a text corpus for the trigram scorer.
///
/// # Safety
/// Path arguments must be NUL-terminated strings or null where optional;
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vd_engine_new(
    dict_path: *const c_char,
    ranks_path: *const c_char,
    map_path: *const c_char,
    lm_corpus_path: *const c_char,
    out: *mut *mut VdEngine,
) -> VdStatus {
    guard(|| {
        if out.is_null() {
            return Err((VdStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let dict = read(required(dict_path, "dict_path")?)?;
        let ranks = optional(ranks_path, "ranks_path")?.map(read).transpose()?;
        let map = optional(map_path, "map_path")?.map(read).transpose()?;
        let model = train(required(lm_corpus_path, "lm_corpus_path")?)?;
        let engine = Engine::from_sources(&dict, ranks.as_deref(), map.as_deref())
            .map_err(|e| (VdStatus::Parse, e.to_string()))?;
        store_engine(out, VdEngine { engine, model });
        Ok(())
    })
}

/// Load an engine from a prebuilt index artifact.
///
/// # Safety
/// As for [`vd_engine_new`].
#[no_mangle]
pub unsafe extern "C" fn vd_engine_from_artifact(
    artifact_path: *const c_char,
    lm_corpus_path: *const c_char,
    out: *mut *mut VdEngine,
) -> VdStatus {
    guard(|| {
        if out.is_null() {
            return Err((VdStatus::NullPointer, "out is null".into()));
        }
        *out = ptr::null_mut();
        let path = required(artifact_path, "artifact_path")?;
        let (engine, _) = artifact::read_artifact(&read(path)?).map_err(|e| (VdStatus::Parse, format!("{path}: {e}")))?;
        let model = train(required(lm_corpus_path, "lm_corpus_path")?)?;
        store_engine(out, VdEngine { engine, model });
        Ok(())
    })
}

/// Release an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vd_engine_free(engine: *mut VdEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

unsafe fn engine_ref<'a>(engine: *const VdEngine) -> Result<&'a VdEngine, Failure> {
    engine.as_ref().ok_or((VdStatus::NullPointer, "engine is null".into()))
}

/// Convert text to visemes: `a b | c d` clusters for scenario 1, a flat
/// stream for scenario 2.
///
/// # Safety
/// `engine` must be live; `text` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vd_to_visemes(
    engine: *const VdEngine,
    text: *const c_char,
    scenario_code: c_uint,
    out: *mut *mut c_char,
) -> VdStatus {
    guard(|| {
        if out.is_null() {
            return Err((VdStatus::NullPointer, "out is null".into()));
        }
        let e = engine_ref(engine)?;
        let text = required(text, "text")?;
        let v = e.engine.to_visemes(text, scenario(scenario_code)?).map_err(|err| match err {
            LexiconError::OutOfVocabulary(_) => (VdStatus::OutOfVocabulary, err.to_string()),
            other => (VdStatus::Parse, other.to_string()),
        })?;
        out_string(out, format_sentence_visemes(&v))
    })
}

/// Decode one viseme line. `beam_width` 0 selects the default.
///
/// # Safety
/// `engine` must be live; `visemes` NUL-terminated; out-pointers valid
/// (`out_perplexity` may be null).
#[no_mangle]
pub unsafe extern "C" fn vd_decode(
    engine: *const VdEngine,
    visemes: *const c_char,
    scenario_code: c_uint,
    beam_width: c_uint,
    out_sentence: *mut *mut c_char,
    out_perplexity: *mut c_double,
) -> VdStatus {
    guard(|| {
        if out_sentence.is_null() {
            return Err((VdStatus::NullPointer, "out_sentence is null".into()));
        }
        let e = engine_ref(engine)?;
        let line = required(visemes, "visemes")?;
        let input = parse_viseme_line(line, scenario(scenario_code)?).map_err(|err| (VdStatus::Parse, err.to_string()))?;
        let mut options = DecodeOptions::default();
        if beam_width > 0 {
            options.beam_width = beam_width as usize;
        }
        let result = e
            .engine
            .decode(&input, &e.model, &options)
            .map_err(|err| (decode_status(&err), err.to_string()))?;
        if !out_perplexity.is_null() {
            *out_perplexity = result.perplexity;
        }
        out_string(out_sentence, result.text())
    })
}

/// Perplexity of a sentence under the engine's scorer.
///
/// # Safety
/// `engine` must be live; `sentence` NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vd_perplexity(engine: *const VdEngine, sentence: *const c_char, out: *mut c_double) -> VdStatus {
    guard(|| {
        if out.is_null() {
            return Err((VdStatus::NullPointer, "out is null".into()));
        }
        let e = engine_ref(engine)?;
        let words = normalize_tokens(required(sentence, "sentence")?);
        *out = e.model.perplexity(&words).map_err(|err| (VdStatus::InvalidArgument, err.to_string()))?;
        Ok(())
    })
}

/// Word error rate of `hypothesis` against `reference`.
///
/// # Safety
/// Both strings NUL-terminated; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vd_word_error_rate(reference: *const c_char, hypothesis: *const c_char, out: *mut c_double) -> VdStatus {
    guard(|| {
        if out.is_null() {
            return Err((VdStatus::NullPointer, "out is null".into()));
        }
        let counts = wer_counts(required(reference, "reference")?, required(hypothesis, "hypothesis")?);
        *out = counts.rate().map_err(|err| (VdStatus::InvalidArgument, err.to_string()))?;
        Ok(())
    })
}

/// Release a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vd_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vd_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version string (static).
#[no_mangle]
pub extern "C" fn vd_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr().cast()
}
