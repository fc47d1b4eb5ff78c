//! Generation backend contract and retry wrapper.
//!
//! The backend is a black box taking (prompt, ordered seed images) and
//! returning text plus optional usage counts. Calls carry an idempotency id
//! so stub backends and resumed runs can reproduce responses exactly.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone)]
pub struct SeedImage {
    pub doc_id: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

#[derive(Debug, Clone)]
pub struct BackendResponse {
    pub text: String,
    pub usage: Option<BackendUsage>,
}

#[derive(Debug)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub images: &'a [SeedImage],
    /// Idempotency key: same id must yield the same stub response, and a
    /// resumed run reuses ids to skip completed calls.
    pub call_id: u64,
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &'static str;

    fn generate(&self, req: &GenerationRequest<'_>) -> Result<BackendResponse>;
}

/// Exponential backoff schedule for transient backend failures.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(2) }
    }
}

impl RetryPolicy {
    pub fn no_wait(max_retries: u32) -> Self {
        RetryPolicy { max_retries, base_delay: Duration::ZERO }
    }

    fn delay(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt)
    }
}

#[derive(Debug)]
pub struct CallOutcome {
    pub response: BackendResponse,
    /// Retries consumed before the successful attempt.
    pub retries: u32,
}

/// Call the backend, retrying transient failures with exponential backoff.
/// A misconfigured backend fails immediately; exhausting retries fails the
/// call (the pipeline keeps running).
pub fn generate_with_retry(
    backend: &dyn GenerationBackend,
    req: &GenerationRequest<'_>,
    policy: &RetryPolicy,
) -> Result<CallOutcome> {
    let mut attempt = 0;
    loop {
        match backend.generate(req) {
            Ok(response) => return Ok(CallOutcome { response, retries: attempt }),
            Err(e @ Error::BackendUnavailable(_)) => return Err(e),
            Err(e) => {
                if attempt >= policy.max_retries {
                    return Err(Error::BackendExhausted {
                        retries: policy.max_retries,
                        message: e.to_string(),
                    });
                }
                let delay = policy.delay(attempt);
                log::warn!(
                    "call {}: attempt {} failed ({e}); retrying in {:?}",
                    req.call_id,
                    attempt + 1,
                    delay
                );
                if !delay.is_zero() {
                    std::thread::sleep(delay);
                }
                attempt += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};

    struct Flaky {
        failures: u32,
        calls: AtomicU32,
    }

    impl GenerationBackend for Flaky {
        fn name(&self) -> &'static str {
            "flaky"
        }

        fn generate(&self, _req: &GenerationRequest<'_>) -> Result<BackendResponse> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(Error::Other("simulated rate limit".into()))
            } else {
                Ok(BackendResponse { text: "ok".into(), usage: None })
            }
        }
    }

    fn req() -> GenerationRequest<'static> {
        GenerationRequest { prompt: "p", images: &[], call_id: 0 }
    }

    #[test]
    fn two_failures_then_success_counts_retries() {
        let b = Flaky { failures: 2, calls: AtomicU32::new(0) };
        let out = generate_with_retry(&b, &req(), &RetryPolicy::no_wait(3)).unwrap();
        assert_eq!(out.response.text, "ok");
        assert_eq!(out.retries, 2);
    }

    #[test]
    fn persistent_failure_exhausts() {
        let b = Flaky { failures: 100, calls: AtomicU32::new(0) };
        let err = generate_with_retry(&b, &req(), &RetryPolicy::no_wait(3));
        match err {
            Err(Error::BackendExhausted { retries, .. }) => assert_eq!(retries, 3),
            other => panic!("expected exhaustion, got {other:?}"),
        }
        assert_eq!(b.calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn unconfigured_backend_fails_without_retry() {
        struct Missing;
        impl GenerationBackend for Missing {
            fn name(&self) -> &'static str {
                "missing"
            }
            fn generate(&self, _req: &GenerationRequest<'_>) -> Result<BackendResponse> {
                Err(Error::BackendUnavailable("no api key".into()))
            }
        }
        let err = generate_with_retry(&Missing, &req(), &RetryPolicy::no_wait(5));
        assert!(matches!(err, Err(Error::BackendUnavailable(_))));
    }

    #[test]
    fn backoff_schedule_doubles() {
        let p = RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(100) };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(400));
    }
}
