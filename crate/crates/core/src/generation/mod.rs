//! Reasoning generation: prompt rendering, frame selection and trace
//! collection from a chat-completions endpoint or a seeded mock.

mod client;
mod mock;

pub use client::{
    generate, ChatRequest, ChatTransport, EchoTransport, GenerateError, GenerateJob, GenerationReport,
    GeneratorEndpoint, HttpTransport, RetryPolicy, TransportError,
};
pub use mock::{mock_corpus, mock_generate, MOCK_GENERATOR_ID};

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::sha256_hex;
use crate::record::RawSample;
use crate::text::lettered_options;

/// Frames attached to each request unless configured otherwise.
pub const DEFAULT_FRAMES: usize = 4;
/// Frame count assumed for a video when none is known.
pub const DEFAULT_TOTAL_FRAMES: usize = 32;

pub const DEFAULT_TEMPLATE_VERSION: &str = "frames-qa-v1";
pub const DEFAULT_TEMPLATE: &str = "These frames are uniformly sampled from a video. Given a question about the video, you should choose the correct answer option from a list of possible answers based on the video content and respond with the option in the format '###Answer: A'. You should also provide a detailed reasoning process explaining why the chosen answer is correct. Cite specific details from the video frames to support your answer. Explain each step of the reasoning to ensure that the answer is logical and reliable. ###Question: {question}, ###Hints: {options}.";

/// Prompt text with `{question}` and `{options}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub version: String,
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { version: DEFAULT_TEMPLATE_VERSION.into(), text: DEFAULT_TEMPLATE.into() }
    }
}

impl PromptTemplate {
    /// Loads a template file; the version label is the file stem.
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let version = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "custom".into());
        Ok(Self { version, text: text.trim_end_matches('\n').to_string() })
    }

    /// SHA-256 of the template text, recorded in generation manifests.
    pub fn hash(&self) -> String {
        sha256_hex(self.text.as_bytes())
    }

    /// Substitutes placeholders in a single pass, so placeholder-like text
    /// inside the question is never expanded.
    pub fn render(&self, sample: &RawSample) -> String {
        let options = lettered_options(&sample.options);
        let mut out = String::with_capacity(self.text.len() + sample.question.len() + options.len());
        let mut rest = self.text.as_str();
        while let Some(i) = rest.find('{') {
            out.push_str(&rest[..i]);
            let tail = &rest[i..];
            if let Some(after) = tail.strip_prefix("{question}") {
                out.push_str(&sample.question);
                rest = after;
            } else if let Some(after) = tail.strip_prefix("{options}") {
                out.push_str(&options);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

/// Renders the default template for a sample.
pub fn render_prompt(sample: &RawSample) -> String {
    PromptTemplate::default().render(sample)
}

/// `n` uniformly spaced frame indices, `floor(k * total / n)` for `k < n`.
pub fn select_frame_indices(total_frames: usize, n: usize) -> Vec<usize> {
    assert!(total_frames >= 1 && n >= 1, "need at least one frame");
    (0..n).map(|k| ((k as u128 * total_frames as u128) / n as u128) as usize).collect()
}

/// Opaque reference to one frame of a video.
pub fn frame_ref(video_ref: &str, index: usize) -> String {
    format!("{video_ref}#frame={index}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRequest {
    pub sample_id: String,
    pub prompt_text: String,
    pub frame_refs: Vec<String>,
    pub n_frames: usize,
}

impl PromptRequest {
    pub fn new(sample: &RawSample, template: &PromptTemplate, total_frames: usize, n_frames: usize) -> Self {
        let frame_refs =
            select_frame_indices(total_frames, n_frames).into_iter().map(|i| frame_ref(&sample.video_ref, i)).collect();
        Self { sample_id: sample.sample_id.clone(), prompt_text: template.render(sample), frame_refs, n_frames }
    }
}

/// `url` without user info, query or fragment, for logs and manifests.
/// Unparseable input is not echoed.
pub fn redact_url(url: &str) -> String {
    match url::Url::parse(url) {
        Ok(mut u) => {
            let _ = u.set_username("");
            let _ = u.set_password(None);
            u.set_query(None);
            u.set_fragment(None);
            u.to_string()
        }
        Err(_) => "<unparseable url>".into(),
    }
}

/// Reproducibility record written next to generated traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub generator_id: String,
    pub template_version: String,
    pub template_hash: String,
    pub n_frames: usize,
    pub total_frames: usize,
    /// Endpoint URL after [`redact_url`]; credentials are never recorded.
    pub endpoint: Option<String>,
    pub mock_error_rate: Option<f64>,
    pub seed: Option<u64>,
    pub requested: usize,
    pub failed: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use std::collections::HashSet;

    fn sample(q: &str, opts: &[&str]) -> RawSample {
        RawSample {
            sample_id: "s".into(),
            video_ref: "vid".into(),
            question: q.into(),
            options: opts.iter().map(|s| s.to_string()).collect(),
            gold_index: 0,
            category: None,
        }
    }

    #[test]
    fn prompt_opening_and_substitution() {
        let p = render_prompt(&sample("Q?", &["X", "Y"]));
        assert!(p.starts_with("These frames are uniformly sampled from a video."));
        assert!(p.contains("###Question: Q?, ###Hints: (A) X (B) Y"));
        assert!(p.ends_with("(B) Y."));
    }

    #[test]
    fn placeholders_inside_question_are_literal() {
        let p = render_prompt(&sample("What is {options}?", &["X", "Y"]));
        assert!(p.contains("###Question: What is {options}?, ###Hints: (A) X (B) Y"));
    }

    #[test]
    fn render_is_injective_over_generated_samples() {
        let mut rng = SplitMix64::new(5);
        let words = ["red", "cup", "man", "table", "why", "did", "the", "open", "door", "sit"];
        let mut seen_inputs = HashSet::new();
        let mut seen_hashes = HashSet::new();
        let template = PromptTemplate::default();
        for _ in 0..10_000 {
            let q: Vec<&str> = (0..1 + rng.below(5)).map(|_| *rng.choose(&words)).collect();
            let k = 2 + rng.below(4);
            let opts: Vec<String> = (0..k)
                .map(|_| (0..1 + rng.below(2)).map(|_| *rng.choose(&words)).collect::<Vec<_>>().join(" "))
                .collect();
            let question = format!("{}?", q.join(" "));
            if !seen_inputs.insert((question.clone(), opts.clone())) {
                continue;
            }
            let s = RawSample { question, options: opts, ..sample("", &["a", "b"]) };
            assert!(seen_hashes.insert(sha256_hex(template.render(&s).as_bytes())));
        }
        assert_eq!(seen_inputs.len(), seen_hashes.len());
    }

    #[test]
    fn urls_lose_credentials() {
        assert_eq!(redact_url("https://user:pw@host:8000/v1?key=abc#x"), "https://host:8000/v1");
        assert_eq!(redact_url("http://127.0.0.1:8000/v1"), "http://127.0.0.1:8000/v1");
        assert_eq!(redact_url("http://a:b@host"), "http://host/");
        assert_eq!(redact_url("localhost v1?token=1"), "<unparseable url>");
    }

    #[test]
    fn frame_indices() {
        assert_eq!(select_frame_indices(100, 4), vec![0, 25, 50, 75]);
        assert_eq!(select_frame_indices(4, 4), vec![0, 1, 2, 3]);
        // floor(k * 10 / 4) for k = 0..4: 0, 2.5, 5, 7.5
        assert_eq!(select_frame_indices(10, 4), vec![0, 2, 5, 7]);
        for total in 1..40 {
            for n in 1..10 {
                let idx = select_frame_indices(total, n);
                assert_eq!(idx.len(), n);
                assert!(idx.windows(2).all(|w| w[0] <= w[1]));
                assert!(idx.iter().all(|&i| i < total));
            }
        }
    }

    #[test]
    fn request_carries_frames() {
        let r = PromptRequest::new(&sample("Q?", &["X", "Y"]), &PromptTemplate::default(), 100, 4);
        assert_eq!(r.frame_refs, vec!["vid#frame=0", "vid#frame=25", "vid#frame=50", "vid#frame=75"]);
        assert_eq!(r.n_frames, r.frame_refs.len());
    }

    #[test]
    fn template_hash_is_stable_and_versioned() {
        let t = PromptTemplate::default();
        assert_eq!(t.hash(), PromptTemplate::default().hash());
        let other = PromptTemplate { text: format!("{} ", t.text), ..t.clone() };
        assert_ne!(t.hash(), other.hash());
    }
}
