use std::future::Future;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::LlmError;

/// Exponential backoff: the wait before retry `k` (0-based) is
/// `backoff_base_ms * 2^k`, and at most `max_attempts` calls are made.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

impl RetryPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_attempts == 0 {
            return Err("retry.max_attempts must be at least 1".into());
        }
        Ok(())
    }

    pub fn delay_before_retry(&self, retry_index: u32) -> Duration {
        let factor = 1u64.checked_shl(retry_index).unwrap_or(u64::MAX);
        Duration::from_millis(self.backoff_base_ms.saturating_mul(factor))
    }
}

/// Runs `op` until it succeeds, fails permanently, or attempts run out.
///
/// `op` receives the 1-based attempt number. Only errors for which
/// [`LlmError::is_transient`] holds are retried; authentication failures
/// therefore end the loop after one call.
pub async fn retry_with_policy<T, Op, OpFut, Sleep, SleepFut>(
    policy: &RetryPolicy,
    mut sleep: Sleep,
    mut op: Op,
) -> Result<T, LlmError>
where
    Op: FnMut(u32) -> OpFut,
    OpFut: Future<Output = Result<T, LlmError>>,
    Sleep: FnMut(Duration) -> SleepFut,
    SleepFut: Future<Output = ()>,
{
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        match op(attempt).await {
            Ok(value) => return Ok(value),
            Err(err) if err.is_transient() && attempt < max => {
                sleep(policy.delay_before_retry(attempt - 1)).await;
                attempt += 1;
            }
            Err(err) => return Err(err),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;

    fn run<T>(
        policy: RetryPolicy,
        mut outcomes: Vec<Result<T, LlmError>>,
    ) -> (Result<T, LlmError>, Vec<u32>, Vec<u64>) {
        let calls = RefCell::new(Vec::new());
        let sleeps = RefCell::new(Vec::new());
        outcomes.reverse();
        let outcomes = RefCell::new(outcomes);
        let result = tokio::runtime::Builder::new_current_thread()
            .build()
            .unwrap()
            .block_on(retry_with_policy(
                &policy,
                |d| {
                    sleeps.borrow_mut().push(d.as_millis() as u64);
                    std::future::ready(())
                },
                |attempt| {
                    calls.borrow_mut().push(attempt);
                    std::future::ready(outcomes.borrow_mut().pop().expect("ran out of outcomes"))
                },
            ));
        (result, calls.into_inner(), sleeps.into_inner())
    }

    fn server_error() -> LlmError {
        LlmError::ProviderRejected {
            status: 500,
            message: "boom".into(),
        }
    }

    #[test]
    fn backoff_doubles() {
        let policy = RetryPolicy {
            max_attempts: 4,
            backoff_base_ms: 100,
        };
        let (result, calls, sleeps) = run(
            policy,
            vec![
                Err(server_error()),
                Err(server_error()),
                Err(server_error()),
                Ok(7),
            ],
        );
        assert_eq!(result, Ok(7));
        assert_eq!(calls, [1, 2, 3, 4]);
        assert_eq!(sleeps, [100, 200, 400]);
    }

    #[test]
    fn gives_up_after_max_attempts() {
        let policy = RetryPolicy {
            max_attempts: 2,
            backoff_base_ms: 10,
        };
        let (result, calls, sleeps) =
            run::<()>(policy, vec![Err(server_error()), Err(server_error())]);
        assert_eq!(result, Err(server_error()));
        assert_eq!(calls.len(), 2);
        assert_eq!(sleeps, [10]);
    }

    #[test]
    fn auth_errors_are_attempted_once() {
        let (result, calls, sleeps) = run::<()>(
            RetryPolicy::default(),
            vec![Err(LlmError::Auth("bad key".into()))],
        );
        assert!(matches!(result, Err(LlmError::Auth(_))));
        assert_eq!(calls, [1]);
        assert!(sleeps.is_empty());
    }

    #[test]
    fn huge_retry_index_saturates() {
        let policy = RetryPolicy {
            max_attempts: 100,
            backoff_base_ms: 1000,
        };
        assert_eq!(
            policy.delay_before_retry(80),
            Duration::from_millis(u64::MAX)
        );
    }
}
