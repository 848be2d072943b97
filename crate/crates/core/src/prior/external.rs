//! Line-delimited JSON bridge to a prior policy running in another process.
//!
//! Each request is one line `{"observation": [...], "instruction": "..."}`; the
//! peer answers with one line `{"macro": [[...], ...]}` (H rows of n values) or
//! `{"error": "..."}`.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::PriorPolicy;
use crate::error::{Error, Result};
use crate::macrolib::MacroAction;
use crate::scalar::Scalar;
use crate::world::{Observation, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorRequest<T> {
    pub observation: Vec<T>,
    pub instruction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorResponse<T> {
    #[serde(rename = "macro", default, skip_serializing_if = "Option::is_none")]
    pub macro_action: Option<Vec<Vec<T>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Prior answered by a peer over a request/response line protocol.
///
/// The channel is exclusive: concurrent callers queue on an internal lock, so
/// requests are answered strictly one at a time. The peer owns its own
/// randomness; the rng handed to [`PriorPolicy::sample_macro`] is unused.
pub struct ExternalPrior<R, W> {
    io: Mutex<(R, W)>,
    horizon: usize,
    action_dim: usize,
}

impl<R: BufRead + Send, W: Write + Send> ExternalPrior<R, W> {
    pub fn new(reader: R, writer: W, horizon: usize, action_dim: usize) -> Self {
        Self {
            io: Mutex::new((reader, writer)),
            horizon,
            action_dim,
        }
    }
}

impl<T: Scalar, R: BufRead + Send, W: Write + Send> PriorPolicy<T> for ExternalPrior<R, W> {
    fn sample_macro(
        &self,
        obs: &Observation<T>,
        task: &TaskSpec,
        _rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>> {
        let mut guard = self
            .io
            .lock()
            .map_err(|_| Error::Prior("external prior channel poisoned".into()))?;
        let (reader, writer) = &mut *guard;
        let req = PriorRequest {
            observation: obs.features.clone(),
            instruction: task.instruction.clone(),
        };
        let mut line = serde_json::to_string(&req)?;
        line.push('\n');
        writer
            .write_all(line.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::Prior(format!("writing request: {e}")))?;

        let mut reply = String::new();
        let n = reader
            .read_line(&mut reply)
            .map_err(|e| Error::Prior(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(Error::Prior("external prior closed its output".into()));
        }
        let resp: PriorResponse<T> = serde_json::from_str(reply.trim())
            .map_err(|e| Error::Prior(format!("malformed response: {e}")))?;
        if let Some(err) = resp.error {
            return Err(Error::Prior(err));
        }
        let rows = resp
            .macro_action
            .ok_or_else(|| Error::Prior("response carries neither `macro` nor `error`".into()))?;
        let u = MacroAction::from_nested(rows).map_err(|e| Error::Prior(e.to_string()))?;
        if u.horizon() != self.horizon || u.dim() != self.action_dim {
            return Err(Error::Prior(format!(
                "expected a {}x{} macro, got {}x{}",
                self.horizon,
                self.action_dim,
                u.horizon(),
                u.dim()
            )));
        }
        Ok(u)
    }

    fn exclusive(&self) -> bool {
        true
    }
}

/// [`ExternalPrior`] over the stdio of a spawned child process.
pub struct ProcessPrior {
    child: Child,
    inner: ExternalPrior<BufReader<ChildStdout>, ChildStdin>,
}

impl ProcessPrior {
    pub fn spawn(mut command: Command, horizon: usize, action_dim: usize) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Prior(format!("spawning prior process: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            inner: ExternalPrior::new(BufReader::new(stdout), stdin, horizon, action_dim),
        })
    }
}

impl Drop for ProcessPrior {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl<T: Scalar> PriorPolicy<T> for ProcessPrior {
    fn sample_macro(
        &self,
        obs: &Observation<T>,
        task: &TaskSpec,
        rng: &mut dyn RngCore,
    ) -> Result<MacroAction<T>> {
        self.inner.sample_macro(obs, task, rng)
    }

    fn exclusive(&self) -> bool {
        true
    }
}

/// Answers protocol requests from `reader` with `prior` until end of input.
///
/// Instructions are resolved against `tasks`; unknown instructions and prior
/// failures are reported as `{"error": ...}` lines. Returns the number of
/// requests served.
pub fn serve_prior<T: Scalar, P: PriorPolicy<T> + ?Sized>(
    reader: impl BufRead,
    mut writer: impl Write,
    prior: &P,
    tasks: &[TaskSpec],
    rng: &mut dyn RngCore,
) -> Result<usize> {
    let mut served = 0;
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<prior input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<PriorRequest<T>>(&line) {
            Err(e) => PriorResponse {
                macro_action: None,
                error: Some(format!("malformed request: {e}")),
            },
            Ok(req) => match tasks.iter().find(|t| t.instruction == req.instruction) {
                None => PriorResponse {
                    macro_action: None,
                    error: Some(format!("unknown instruction `{}`", req.instruction)),
                },
                Some(task) => {
                    let obs = Observation {
                        features: req.observation,
                    };
                    match prior.sample_macro(&obs, task, rng) {
                        Ok(u) => PriorResponse {
                            macro_action: Some(u.to_nested()),
                            error: None,
                        },
                        Err(e) => PriorResponse {
                            macro_action: None,
                            error: Some(e.to_string()),
                        },
                    }
                }
            },
        };
        let mut out = serde_json::to_string(&resp)?;
        out.push('\n');
        writer
            .write_all(out.as_bytes())
            .and_then(|_| writer.flush())
            .map_err(|e| Error::io("<prior output>", e))?;
        served += 1;
    }
    Ok(served)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{make_blocknav_env, ScriptedExpertPrior, WorldModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    #[test]
    fn served_responses_feed_an_external_prior() {
        let (env, tasks) = make_blocknav_env::<f64>(10.0, 2).unwrap();
        let expert = ScriptedExpertPrior::new(env.clone(), 4, 0.0).unwrap();
        let obs = env.observe(&env.reset(0, &tasks[1].task_id).unwrap());

        let req = PriorRequest {
            observation: obs.features.clone(),
            instruction: tasks[1].instruction.clone(),
        };
        let mut input = serde_json::to_string(&req).unwrap();
        input.push_str("\n{\"observation\":[],\"instruction\":\"dance\"}\n");
        let mut output = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let served = serve_prior(Cursor::new(input), &mut output, &expert, &tasks, &mut rng).unwrap();
        assert_eq!(served, 2);

        let mut sent = Vec::new();
        let remote = ExternalPrior::new(Cursor::new(output), &mut sent, 4, 3);
        let got: MacroAction<f64> = remote.sample_macro(&obs, &tasks[1], &mut rng).unwrap();
        let direct = expert.sample_macro(&obs, &tasks[1], &mut rng).unwrap();
        assert_eq!(got, direct);
        let err = PriorPolicy::<f64>::sample_macro(&remote, &obs, &tasks[1], &mut rng);
        assert!(matches!(err, Err(Error::Prior(msg)) if msg.contains("unknown instruction")));
        assert!(PriorPolicy::<f64>::exclusive(&remote));
        drop(remote);

        let line = String::from_utf8(sent).unwrap();
        let first: PriorRequest<f64> = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(first, req);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (env, tasks) = make_blocknav_env::<f64>(10.0, 1).unwrap();
        let obs = env.observe(&env.reset(0, &tasks[0].task_id).unwrap());
        let reply = "{\"macro\":[[0.0,0.0,1.0]]}\n";
        let remote = ExternalPrior::new(Cursor::new(reply), Vec::new(), 4, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = PriorPolicy::<f64>::sample_macro(&remote, &obs, &tasks[0], &mut rng);
        assert!(matches!(r, Err(Error::Prior(_))));
        let r = PriorPolicy::<f64>::sample_macro(&remote, &obs, &tasks[0], &mut rng);
        assert!(matches!(r, Err(Error::Prior(msg)) if msg.contains("closed")));
    }
}
