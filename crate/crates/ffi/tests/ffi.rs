use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use bandformer::attention::{band_mask_oracle, masked_attention, AttentionMode};
use bandformer::model::{Model, ModelConfig, ModelSpec};
use bandformer::tensor::Tensor;
use bandformer::training::{encode_checkpoint, init_parameters, save_checkpoint, InitScheme, Manifest};
use bandformer_ffi::*;

fn tiny_model() -> Model<f32> {
    let spec = ModelSpec::Transformer(ModelConfig::new(390, 1, 2, 8, 16, 32, AttentionMode::SlidingWindow).with_window(8));
    let mut m = Model::new(&spec).unwrap();
    init_parameters(&mut m, InitScheme::XavierSplit, 1);
    m
}

fn load(model: &Model<f32>) -> *mut BfModel {
    let bytes = encode_checkpoint(model, &Manifest::new(model, 0, None)).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { bf_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) }, BfStatus::Ok);
    handle
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(bf_last_error_message()) }.to_string_lossy().into_owned()
}

fn corpus_file() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/corpus/piece_000.mid")
}

#[test]
fn forward_matches_library() {
    let model = tiny_model();
    let handle = load(&model);
    unsafe {
        assert_eq!(bf_model_vocab_size(handle), 390);
        assert_eq!(bf_model_max_len(handle), 32);
    }
    let tokens = [389u32, 360, 60, 270, 188];
    let mut logits = vec![0f32; 5 * 390];
    let status = unsafe { bf_model_forward(handle, tokens.as_ptr(), 5, logits.as_mut_ptr(), logits.len()) };
    assert_eq!(status, BfStatus::Ok);
    assert!(bf_last_error_message().is_null());
    let want = model.forward(&[389, 360, 60, 270, 188], None).unwrap();
    assert_eq!(logits, want.data());
    unsafe { bf_model_free(handle) };
}

#[test]
fn errors_set_status_and_message() {
    let handle = load(&tiny_model());
    let tokens = [500u32];
    let mut logits = vec![0f32; 390];
    let status = unsafe { bf_model_forward(handle, tokens.as_ptr(), 1, logits.as_mut_ptr(), 390) };
    assert_eq!(status, BfStatus::Vocabulary);
    assert!(last_error().contains("500"));

    let status = unsafe { bf_model_forward(handle, tokens.as_ptr(), 1, logits.as_mut_ptr(), 7) };
    assert_eq!(status, BfStatus::InvalidArgument);

    let long = vec![1u32; 40];
    let mut out = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
    let status = unsafe { bf_generate(handle, long.as_ptr(), long.len(), 41, 1.0, 0, 0, &mut out) };
    assert_eq!(status, BfStatus::Capacity);

    let mut none = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.bfck").unwrap();
    assert_eq!(unsafe { bf_model_load(missing.as_ptr(), &mut none) }, BfStatus::Io);
    assert_eq!(unsafe { bf_model_load(ptr::null(), &mut none) }, BfStatus::NullPointer);
    assert_eq!(unsafe { bf_model_from_bytes(b"junk".as_ptr(), 4, &mut none) }, BfStatus::Format);
    unsafe { bf_model_free(handle) };
    unsafe { bf_model_free(ptr::null_mut()) };
}

#[test]
fn greedy_generation_keeps_primer() {
    let handle = load(&tiny_model());
    let primer = [389u32, 360, 60];
    let mut a = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
    let mut b = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
    unsafe {
        assert_eq!(bf_generate(handle, primer.as_ptr(), 3, 20, 1.0, 1, 1, &mut a), BfStatus::Ok);
        assert_eq!(bf_generate(handle, primer.as_ptr(), 3, 20, 1.0, 2, 1, &mut b), BfStatus::Ok);
        let (sa, sb) = (std::slice::from_raw_parts(a.data, a.len), std::slice::from_raw_parts(b.data, b.len));
        assert_eq!(sa.len(), 20);
        assert_eq!(&sa[..3], &primer);
        assert_eq!(sa, sb);
        bf_tokens_free(a);
        bf_tokens_free(b);
        bf_model_free(handle);
    }
}

#[test]
fn midi_token_round_trip() {
    let bytes = std::fs::read(corpus_file()).unwrap();
    let mut tokens = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
    let mut midi = BfByteBuffer { data: ptr::null_mut(), len: 0 };
    let mut again = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
    unsafe {
        assert_eq!(bf_midi_to_tokens(bytes.as_ptr(), bytes.len(), &mut tokens), BfStatus::Ok);
        assert_eq!(bf_tokens_to_midi(tokens.data, tokens.len, &mut midi), BfStatus::Ok);
        assert_eq!(&std::slice::from_raw_parts(midi.data, midi.len)[..4], b"MThd");
        // tokens are already on the 10 ms grid, so a second pass is exact
        assert_eq!(bf_midi_to_tokens(midi.data, midi.len, &mut again), BfStatus::Ok);
        assert_eq!(
            std::slice::from_raw_parts(tokens.data, tokens.len),
            std::slice::from_raw_parts(again.data, again.len)
        );
        bf_tokens_free(tokens);
        bf_tokens_free(again);
        bf_bytes_free(midi);
        let mut junk = BfTokenBuffer { data: ptr::null_mut(), len: 0 };
        assert_eq!(bf_midi_to_tokens(b"RIFF".as_ptr(), 4, &mut junk), BfStatus::Format);
    }
}

#[test]
fn attention_kernel_matches_oracle() {
    let (h, n, s, w) = (2, 24, 4, 8);
    let len = h * n * s;
    let gen = |seed: usize| (0..len).map(|i| (((i * 7919 + seed * 104729) % 1000) as f32 / 500.0) - 1.0).collect::<Vec<f32>>();
    let (q, k, v) = (gen(1), gen(2), gen(3));
    let mut out = vec![0f32; len];
    let status = unsafe {
        bf_sliding_window_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), h, n, s, w, 1, 1, out.as_mut_ptr())
    };
    assert_eq!(status, BfStatus::Ok);
    let t = |d: &Vec<f32>| Tensor::from_vec(d.clone(), &[h, n, s]).unwrap();
    let want = masked_attention(&t(&q), &t(&k), &t(&v), &band_mask_oracle(n, w, 1, true), 0.0, None).unwrap();
    for (a, b) in out.iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-5);
    }
    let status = unsafe {
        bf_sliding_window_attention(q.as_ptr(), k.as_ptr(), v.as_ptr(), h, n, s, 3, 1, 1, out.as_mut_ptr())
    };
    assert_eq!(status, BfStatus::InvalidArgument);
}

/// Compiles the C smoke program against the generated header and the
/// static library, then runs it.
#[test]
fn c_program_links_and_runs() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let deps = std::env::current_exe().unwrap();
    let profile_dir = deps.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libbandformer_ffi.a");
    assert!(lib.exists(), "static library not found at {}", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let exe = tmp.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());

    let ckpt = tmp.path().join("tiny.bfck");
    let model = tiny_model();
    save_checkpoint(&ckpt, &model, &Manifest::new(&model, 0, None)).unwrap();
    let out = Command::new(&exe).arg(&ckpt).arg(corpus_file()).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("generated 16 tokens"));
}
