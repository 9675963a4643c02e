//! Deterministic stand-in for a completion provider.
//!
//! Candidate `i` for a request is
//!
//! ```text
//! "IDEA(" + hex[..12] + "): " + first 40 chars of prompt
//! hex = lowercase, zero-padded FNV-1a 64 of
//!       prompt ␟ format!("{:.6}", temperature) ␟ i ␟ seed
//! ```
//!
//! where `␟` is U+001F, `i` and `seed` are decimal, and "chars" are Unicode
//! scalar values. Only `request.prompt` is hashed; the system message and
//! few-shot preamble do not affect the output.

use async_trait::async_trait;

use super::{CompletionBackend, CompletionRequest, CompletionResponse, LlmError};

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const FIELD_SEPARATOR: char = '\u{1f}';
const PROMPT_ECHO_CHARS: usize = 40;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET_BASIS, |hash, b| {
        (hash ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

pub fn mock_candidate(prompt: &str, temperature: f64, index: u32, seed: u64) -> String {
    let key = format!(
        "{prompt}{FIELD_SEPARATOR}{temperature:.6}{FIELD_SEPARATOR}{index}{FIELD_SEPARATOR}{seed}"
    );
    let digest = format!("{:016x}", fnv1a64(key.as_bytes()));
    let echo: String = prompt.chars().take(PROMPT_ECHO_CHARS).collect();
    format!("IDEA({}): {echo}", &digest[..12])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MockBackend {
    seed: u64,
}

impl MockBackend {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn respond(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        request.validate()?;
        Ok(CompletionResponse {
            candidates: (0..request.candidate_count)
                .map(|i| mock_candidate(&request.prompt, request.temperature, i, self.seed))
                .collect(),
            backend_id: "mock".into(),
            model_ref: request.model_ref.clone(),
            latency_ms: 0,
            token_usage: None,
            warning: None,
        })
    }
}

#[async_trait]
impl CompletionBackend for MockBackend {
    fn backend_id(&self) -> &str {
        "mock"
    }

    async fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        self.respond(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(prompt: &str, temperature: f64, count: u32) -> CompletionRequest {
        CompletionRequest {
            model_ref: "m".into(),
            prompt: prompt.into(),
            system_message: None,
            few_shot_preamble: None,
            stop_sequence: None,
            temperature,
            max_tokens: 16,
            candidate_count: count,
        }
    }

    #[test]
    fn three_candidates_are_distinct() {
        let resp = MockBackend::new(42).respond(&request("p", 1.0, 3)).unwrap();
        assert_eq!(resp.candidates.len(), 3);
        let mut unique = resp.candidates.clone();
        unique.sort();
        unique.dedup();
        assert_eq!(unique.len(), 3);
    }

    #[test]
    fn echo_is_character_based() {
        let prompt = "é".repeat(50);
        let c = mock_candidate(&prompt, 1.0, 0, 0);
        assert!(c.ends_with(&"é".repeat(40)));
        assert!(!c.ends_with(&"é".repeat(41)));
    }

    #[test]
    fn preamble_does_not_change_output() {
        let mut with = request("p", 1.0, 1);
        with.few_shot_preamble = Some("examples".into());
        with.system_message = Some("sys".into());
        let backend = MockBackend::new(1);
        assert_eq!(
            backend.respond(&with).unwrap().candidates,
            backend.respond(&request("p", 1.0, 1)).unwrap().candidates
        );
    }

    #[test]
    fn invalid_request_is_rejected() {
        assert!(MockBackend::new(0).respond(&request("", 1.0, 1)).is_err());
    }
}
