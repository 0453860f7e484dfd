use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{SolveResult, SolverError, SubproblemSolver};
use crate::subqubo::SubQubo;

/// Caps the number of solver subprocesses alive at once.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    running: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub fn new(max: usize) -> Result<Arc<Self>, SolverError> {
        if max == 0 {
            return Err(SolverError::InvalidParams("max_concurrent must be at least 1".into()));
        }
        Ok(Arc::new(Self {
            max,
            running: Mutex::new(0),
            freed: Condvar::new(),
        }))
    }

    pub fn max(&self) -> usize {
        self.max
    }

    fn acquire(&self) -> Permit<'_> {
        let mut running = self.running.lock().unwrap();
        while *running >= self.max {
            running = self.freed.wait(running).unwrap();
        }
        *running += 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.running.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// What an external solver prints on stdout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverResponse {
    pub spins: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

/// Serializes a result in the response format external solvers use.
pub fn format_response(result: &SolveResult) -> String {
    let resp = SolverResponse {
        spins: result.spins.iter().map(|&s| i64::from(s)).collect(),
        energy: Some(result.energy),
    };
    serde_json::to_string(&resp).expect("response serializes")
}

/// Runs `sh -c <cmd>` per subproblem: the subproblem JSON goes to stdin, a
/// [`SolverResponse`] is read from stdout. Reported energies are ignored in
/// favor of local re-evaluation.
#[derive(Clone, Debug)]
pub struct ExternalSolver {
    cmd: String,
    timeout: Duration,
    limiter: Arc<Limiter>,
}

impl ExternalSolver {
    pub fn new(cmd: String, timeout: Duration, limiter: Arc<Limiter>) -> Self {
        Self { cmd, timeout, limiter }
    }

    fn run(&self, input: String) -> Result<String, SolverError> {
        let _permit = self.limiter.acquire();
        let deadline = Instant::now() + self.timeout;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.cmd)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(SolverError::Spawn)?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let writer = thread::spawn(move || {
            // a solver that exits without reading its input is not an error here
            let _ = stdin.write_all(input.as_bytes());
        });
        let mut stdout = child.stdout.take().expect("piped stdout");
        let reader = thread::spawn(move || {
            let mut buf = String::new();
            stdout.read_to_string(&mut buf).map(|_| buf)
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let mut pause = Duration::from_millis(1);
        let status = loop {
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(SolverError::Timeout(self.timeout));
            }
            match child.try_wait().map_err(SolverError::Io)? {
                Some(status) => break status,
                None => {
                    thread::sleep(pause.min(deadline.saturating_duration_since(Instant::now())));
                    pause = (pause * 2).min(Duration::from_millis(20));
                }
            }
        };
        let _ = writer.join();
        let out = reader
            .join()
            .expect("stdout reader panicked")
            .map_err(SolverError::Io)?;
        let err = err_reader.join().expect("stderr reader panicked");
        if !status.success() {
            return Err(SolverError::NonZeroExit {
                status: status.to_string(),
                stderr: err.trim().to_string(),
            });
        }
        Ok(out)
    }
}

impl SubproblemSolver for ExternalSolver {
    fn id(&self) -> &'static str {
        "external"
    }

    fn is_stochastic(&self) -> bool {
        true
    }

    fn solve(&self, q: &SubQubo, _seed: u64) -> Result<SolveResult, SolverError> {
        let out = self.run(q.to_json())?;
        let resp: SolverResponse = serde_json::from_str(out.trim())
            .map_err(|e| SolverError::MalformedResponse(format!("{e}: {:?}", truncate(&out))))?;
        if resp.spins.len() != q.k() {
            return Err(SolverError::WrongSpinLength {
                expected: q.k(),
                got: resp.spins.len(),
            });
        }
        let spins = resp
            .spins
            .iter()
            .map(|&s| match s {
                -1 => Ok(-1i8),
                1 => Ok(1i8),
                other => Err(SolverError::InvalidSpin(other)),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let result = SolveResult::evaluated(q, spins, 1, false);
        if let Some(reported) = resp.energy {
            let tol = 1e-9 * result.energy.abs().max(1.0);
            if (reported - result.energy).abs() > tol {
                log::warn!(
                    "external solver reported energy {reported}, local evaluation gives {}",
                    result.energy
                );
            }
        }
        Ok(result)
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
