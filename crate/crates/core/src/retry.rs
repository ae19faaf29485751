//! Retry with exponential backoff for remote calls.

use std::time::Duration;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
    /// Per-call timeout, enforced by the HTTP client.
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
            timeout: Duration::from_secs(60),
        }
    }
}

impl RetryPolicy {
    /// No sleeping between attempts; for tests.
    pub fn immediate(attempts: u32) -> Self {
        Self {
            attempts,
            initial_backoff: Duration::ZERO,
            ..Self::default()
        }
    }

    /// Runs `op` until it succeeds, returns a non-retryable error, or the attempt
    /// budget is spent. Returns the last error and the number of attempts made.
    pub fn run<T, E>(
        &self,
        mut retryable: impl FnMut(&E) -> bool,
        mut op: impl FnMut(u32) -> Result<T, E>,
    ) -> Result<(T, u32), (E, u32)> {
        let attempts = self.attempts.max(1);
        let mut backoff = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match op(attempt) {
                Ok(v) => return Ok((v, attempt)),
                Err(e) if attempt < attempts && retryable(&e) => {
                    tracing::debug!(attempt, ?backoff, "retrying after failure");
                    if !backoff.is_zero() {
                        std::thread::sleep(backoff);
                    }
                    backoff = backoff.saturating_mul(2);
                    attempt += 1;
                }
                Err(e) => return Err((e, attempt)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stops_after_budget() {
        let mut calls = 0;
        let r: Result<((), u32), (&str, u32)> = RetryPolicy::immediate(3).run(
            |_| true,
            |_| {
                calls += 1;
                Err("boom")
            },
        );
        assert_eq!(r, Err(("boom", 3)));
        assert_eq!(calls, 3);
    }

    #[test]
    fn non_retryable_fails_fast() {
        let r: Result<((), u32), (&str, u32)> =
            RetryPolicy::immediate(3).run(|_| false, |_| Err("bad request"));
        assert_eq!(r, Err(("bad request", 1)));
    }

    #[test]
    fn succeeds_midway() {
        let r = RetryPolicy::immediate(3)
            .run(|_: &&str| true, |n| if n < 2 { Err("x") } else { Ok(n) });
        assert_eq!(r, Ok((2, 2)));
    }
}
