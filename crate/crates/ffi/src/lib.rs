//! C ABI for the jointseg tagger and two-stage pipeline.
//!
//! Every function returns a [`JsegStatus`]. On failure a message is stored
//! per thread and can be read with [`jseg_last_error`]. Strings passed in
//! must be NUL-terminated UTF-8; strings handed out are owned by the caller
//! and released with [`jseg_string_free`]. Predictions are returned in slash
//! format (`word/POS` separated by spaces).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use jointseg::corpus::format_slash;
use jointseg::pipeline::{predict_se, Pipeline, PipelineOptions};
use jointseg::{Error, KfModel, KnowledgeCorpus, SeModel};

/// Result codes shared by all entry points.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsegStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    /// Unreadable checkpoint, index or corpus file.
    Format = 5,
    /// Models that cannot be combined, or a checkpoint of the wrong kind.
    Incompatible = 6,
    /// Input the models cannot process, such as characters past their limits.
    Input = 7,
    Panic = 8,
}

/// Sampling settings for [`jseg_pipeline_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JsegOptions {
    /// Dropout samples per sentence.
    pub samples: u32,
    /// Knowledge sentences retrieved per uncertain component.
    pub top_m: u32,
    pub seed: u64,
}

/// A loaded tagger checkpoint.
pub struct JsegTagger {
    model: SeModel,
}

/// A knowledge corpus with its n-gram index.
pub struct JsegKnowledge {
    corpus: KnowledgeCorpus,
}

/// Tagger, fusion model and knowledge corpus ready for prediction.
pub struct JsegPipeline {
    se: SeModel,
    kf: KfModel,
    knowledge: KnowledgeCorpus,
    options: PipelineOptions,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn status_of(error: &Error) -> JsegStatus {
    match error {
        Error::Io(_) => JsegStatus::Io,
        Error::Format(_) | Error::Parse { .. } | Error::EmptyCorpus => JsegStatus::Format,
        Error::Incompatible(_) => JsegStatus::Incompatible,
        Error::InvalidArgument(_) | Error::Config(_) => JsegStatus::InvalidArgument,
        _ => JsegStatus::Input,
    }
}

struct Failure(JsegStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> JsegStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => JsegStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {message}"));
            JsegStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(JsegStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(JsegStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure(JsegStatus::NullPointer, format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(JsegStatus::NullPointer, "output pointer is null".into()));
    }
    Ok(())
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let s = CString::new(s).map_err(|_| Failure(JsegStatus::Input, "output contains NUL".into()))?;
    *out = s.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or null after a
/// successful one. The pointer stays valid until the next call on the thread.
#[no_mangle]
pub extern "C" fn jseg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn jseg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default sampling settings: 8 samples, 1 knowledge sentence, seed 42.
#[no_mangle]
pub extern "C" fn jseg_default_options() -> JsegOptions {
    JsegOptions {
        samples: 8,
        top_m: 1,
        seed: 42,
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a string obtained from this library that has not
/// been freed.
#[no_mangle]
pub unsafe extern "C" fn jseg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a tagger checkpoint.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_load(path: *const c_char, out: *mut *mut JsegTagger) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let path = read_str(path, "path")?;
        put(out, JsegTagger { model: SeModel::load(path)? })
    })
}

/// Tags one sentence with the tagger alone.
///
/// # Safety
/// `tagger` must come from [`jseg_tagger_load`], `text` must be a valid C
/// string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_predict(
    tagger: *const JsegTagger,
    text: *const c_char,
    out: *mut *mut c_char,
) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let tagger = deref(tagger, "tagger")?;
        let text = read_str(text, "text")?;
        let chars: Vec<char> = text.chars().collect();
        let words = predict_se(&tagger.model, text)?;
        put_string(out, format_slash(&chars, &words, &tagger.model.tagset))
    })
}

/// # Safety
/// `tagger` must be null or a live handle from [`jseg_tagger_load`].
#[no_mangle]
pub unsafe extern "C" fn jseg_tagger_free(tagger: *mut JsegTagger) {
    if !tagger.is_null() {
        drop(Box::from_raw(tagger));
    }
}

/// Loads a knowledge index written by `jointseg index build`.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_knowledge_load_index(
    path: *const c_char,
    out: *mut *mut JsegKnowledge,
) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let path = read_str(path, "path")?;
        put(out, JsegKnowledge { corpus: KnowledgeCorpus::load(path)? })
    })
}

/// Builds a knowledge corpus from a text file with one sentence per line.
///
/// # Safety
/// `path` must be a valid C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_knowledge_from_text(
    path: *const c_char,
    max_ngram: usize,
    out: *mut *mut JsegKnowledge,
) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let path = read_str(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(Error::from)?;
        put(out, JsegKnowledge { corpus: KnowledgeCorpus::from_text(&text, max_ngram)? })
    })
}

/// Number of sentences in the corpus, or 0 for a null handle.
///
/// # Safety
/// `knowledge` must be null or a live knowledge handle.
#[no_mangle]
pub unsafe extern "C" fn jseg_knowledge_len(knowledge: *const JsegKnowledge) -> usize {
    knowledge.as_ref().map_or(0, |k| k.corpus.len())
}

/// # Safety
/// `knowledge` must be null or a live knowledge handle.
#[no_mangle]
pub unsafe extern "C" fn jseg_knowledge_free(knowledge: *mut JsegKnowledge) {
    if !knowledge.is_null() {
        drop(Box::from_raw(knowledge));
    }
}

/// Loads both checkpoints and copies `knowledge` into a new pipeline. The
/// knowledge handle may be freed afterwards. A null `options` selects
/// [`jseg_default_options`].
///
/// # Safety
/// Paths must be valid C strings, `knowledge` a live handle, `options` null
/// or readable, and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_pipeline_load(
    se_path: *const c_char,
    kf_path: *const c_char,
    knowledge: *const JsegKnowledge,
    options: *const JsegOptions,
    out: *mut *mut JsegPipeline,
) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let se = SeModel::load(read_str(se_path, "se_path")?)?;
        let kf = KfModel::load(read_str(kf_path, "kf_path")?)?;
        let knowledge = deref(knowledge, "knowledge")?.corpus.clone();
        let o = options.as_ref().copied().unwrap_or_else(|| jseg_default_options());
        let options = PipelineOptions {
            samples: o.samples as usize,
            top_m: o.top_m as usize,
            seed: o.seed,
        };
        Pipeline::new(&se, &kf, &knowledge, options)?;
        put(
            out,
            JsegPipeline {
                se,
                kf,
                knowledge,
                options,
            },
        )
    })
}

/// Tags one sentence with the full pipeline. `index` is the sentence's
/// position in the caller's run; together with the seed it fixes the
/// dropout masks, so equal inputs give equal outputs.
///
/// # Safety
/// `pipeline` must come from [`jseg_pipeline_load`], `text` must be a valid
/// C string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn jseg_pipeline_predict(
    pipeline: *const JsegPipeline,
    text: *const c_char,
    index: usize,
    out: *mut *mut c_char,
) -> JsegStatus {
    guard(|| {
        check_out(out)?;
        let p = deref(pipeline, "pipeline")?;
        let text = read_str(text, "text")?;
        let chars: Vec<char> = text.chars().collect();
        let prediction = Pipeline::new(&p.se, &p.kf, &p.knowledge, p.options)?.predict(text, index)?;
        put_string(out, format_slash(&chars, &prediction.words, &p.se.tagset))
    })
}

/// # Safety
/// `pipeline` must be null or a live handle from [`jseg_pipeline_load`].
#[no_mangle]
pub unsafe extern "C" fn jseg_pipeline_free(pipeline: *mut JsegPipeline) {
    if !pipeline.is_null() {
        drop(Box::from_raw(pipeline));
    }
}
