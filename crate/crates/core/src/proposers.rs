//! Edit-proposal sources: scriptable, template-random, and remote.
//!
//! A proposer fulfills the diagnose-and-propose contract: given the current
//! spec and a diagnosis of where it fails, suggest edits. The searcher is
//! deliberately proposer-agnostic; the gate decides acceptance, so a
//! proposer can only waste budget, never corrupt a session.
//!
//! Three implementations ship here. The scriptable proposer replays a fixed
//! edit list and stands in for a frontier-model teacher in tests. The
//! template-random proposer samples the shared catalog uniformly and ignores
//! the diagnosis entirely, which makes it the control arm for proposer
//! ablations. The remote proposer POSTs the spec, diagnosis, and catalog as
//! JSON to a configured endpoint and filters whatever comes back down to
//! schema-valid edits.

use std::collections::BTreeSet;
use std::time::Duration;

use rand::prelude::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edit::{apply, enumerate_catalog, Edit, EditError, EditTemplate, Primitive};
use crate::gate::{FailureCluster, TaskOutcome, TaskRecord};
use crate::harness::Suite;
use crate::spec::{spec_to_json, Spec};

/// Maximum characters kept per trace excerpt.
pub const EXCERPT_CHAR_CAP: usize = 2000;

/// Default number of failing-trace excerpts carried per cluster.
pub const DEFAULT_EXCERPTS_PER_CLUSTER: usize = 5;

/// Default remote-proposer timeout in seconds.
pub const DEFAULT_REMOTE_TIMEOUT_S: f64 = 60.0;

/// Environment variable naming the remote proposer endpoint.
pub const ENV_PROPOSER_URL: &str = "SPECFORGE_PROPOSER_URL";

/// Environment variable overriding the remote timeout, in seconds.
pub const ENV_PROPOSER_TIMEOUT_S: &str = "SPECFORGE_PROPOSER_TIMEOUT_S";

/// Errors raised while constructing proposers or proposing.
#[derive(Debug, Error)]
pub enum ProposerError {
    /// A scriptable script failed to parse or validate at load time.
    #[error("malformed script: {0}")]
    Script(String),
    /// The catalog was empty for the requested move space.
    #[error("empty catalog for the requested move space")]
    EmptyCatalog,
    /// The remote endpoint could not be configured.
    #[error("remote proposer: {0}")]
    Remote(String),
    #[error(transparent)]
    Edit(#[from] EditError),
}

/// What the proposer learns about the current spec's failures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnosis {
    pub clusters: Vec<ClusterDiagnosis>,
}

/// One failing cluster with a bounded sample of failing traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterDiagnosis {
    pub cluster: FailureCluster,
    pub excerpts: Vec<String>,
}

impl Diagnosis {
    /// Builds a diagnosis from one scoring pass: outcomes are grouped by
    /// failure signature and each group keeps at most `excerpt_cap` trace
    /// excerpts, each truncated to [`EXCERPT_CHAR_CAP`] characters.
    pub fn from_outcomes(
        tasks: &[TaskRecord],
        outcomes: &[TaskOutcome],
        excerpt_cap: usize,
    ) -> Diagnosis {
        let pairs: Vec<(TaskRecord, String)> = tasks
            .iter()
            .zip(outcomes)
            .map(|(task, outcome)| {
                (
                    task.clone(),
                    outcome.failure_signature.clone().unwrap_or_default(),
                )
            })
            .collect();
        let clusters = crate::gate::cluster_by_signature(&pairs)
            .into_iter()
            .map(|cluster| {
                let excerpts = pairs
                    .iter()
                    .filter(|(_, sig)| *sig == cluster.cluster_id)
                    .take(excerpt_cap)
                    .map(|(task, sig)| {
                        let mut excerpt =
                            format!("task {}: `{}` failed with {sig}", task.task_id, task.query);
                        excerpt.truncate(EXCERPT_CHAR_CAP);
                        excerpt
                    })
                    .collect();
                ClusterDiagnosis { cluster, excerpts }
            })
            .collect();
        Diagnosis { clusters }
    }
}

/// One suggested edit with an advisory confidence and the cluster it aims at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub edit: Edit,
    pub confidence: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis_ref: Option<String>,
}

/// A source of edit proposals. One `propose` call costs one unit of the
/// session's proposal budget, however many edits it returns.
pub trait Proposer {
    fn id(&self) -> &str;

    /// Proposes zero or more edits for the current spec. An empty result
    /// means the proposer has nothing further to offer this round.
    fn propose(
        &mut self,
        spec: &Spec,
        diagnosis: &Diagnosis,
    ) -> Result<Vec<Proposal>, ProposerError>;
}

/// Replays a fixed, pre-validated edit list, one edit per call.
#[derive(Debug)]
pub struct ScriptableProposer {
    edits: Vec<Edit>,
    cursor: usize,
}

impl ScriptableProposer {
    /// Wraps an edit list, validating every entry up front so malformed
    /// scripts fail at load time rather than mid-session.
    pub fn new(edits: Vec<Edit>) -> Result<ScriptableProposer, ProposerError> {
        for (i, edit) in edits.iter().enumerate() {
            edit.validate()
                .map_err(|e| ProposerError::Script(format!("edit {i}: {e}")))?;
        }
        Ok(ScriptableProposer { edits, cursor: 0 })
    }

    /// Parses a script file: a JSON array of edit objects.
    pub fn from_json(s: &str) -> Result<ScriptableProposer, ProposerError> {
        let edits: Vec<Edit> =
            serde_json::from_str(s).map_err(|e| ProposerError::Script(e.to_string()))?;
        ScriptableProposer::new(edits)
    }

    /// Scripts the suite's oracle fixes in declaration order; this is the
    /// deterministic stand-in for an oracle-informed teacher.
    pub fn from_oracle(suite: &Suite) -> ScriptableProposer {
        ScriptableProposer {
            edits: suite.oracle.iter().map(|entry| entry.edit.clone()).collect(),
            cursor: 0,
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursor >= self.edits.len()
    }
}

impl Proposer for ScriptableProposer {
    fn id(&self) -> &str {
        "scriptable"
    }

    fn propose(
        &mut self,
        _spec: &Spec,
        _diagnosis: &Diagnosis,
    ) -> Result<Vec<Proposal>, ProposerError> {
        let Some(edit) = self.edits.get(self.cursor).cloned() else {
            return Ok(Vec::new());
        };
        self.cursor += 1;
        let diagnosis_ref = edit.target_cluster.clone();
        Ok(vec![Proposal {
            edit,
            confidence: 1.0,
            diagnosis_ref,
        }])
    }
}

/// Uniform template choice, then uniform parameter choice, both from `rng`.
/// Returns `None` on an empty catalog.
pub fn template_random_propose(catalog: &[EditTemplate], rng: &mut ChaCha8Rng) -> Option<Edit> {
    catalog.choose(rng).map(|template| template.sample(rng))
}

/// Samples the shared catalog uniformly within a move space. Receives no
/// trace diagnosis by design: this proposer is the ablation control.
pub struct TemplateRandomProposer {
    move_space: BTreeSet<Primitive>,
    rng: ChaCha8Rng,
}

impl TemplateRandomProposer {
    pub fn new(move_space: BTreeSet<Primitive>, seed: u64) -> TemplateRandomProposer {
        TemplateRandomProposer {
            move_space,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn full(seed: u64) -> TemplateRandomProposer {
        TemplateRandomProposer::new(Primitive::ALL.into_iter().collect(), seed)
    }
}

impl Proposer for TemplateRandomProposer {
    fn id(&self) -> &str {
        "template_random"
    }

    fn propose(
        &mut self,
        spec: &Spec,
        _diagnosis: &Diagnosis,
    ) -> Result<Vec<Proposal>, ProposerError> {
        let catalog = enumerate_catalog(spec, &self.move_space)?;
        let edit =
            template_random_propose(&catalog, &mut self.rng).ok_or(ProposerError::EmptyCatalog)?;
        Ok(vec![Proposal {
            edit,
            confidence: 0.5,
            diagnosis_ref: None,
        }])
    }
}

#[derive(Deserialize)]
struct RemoteResponse {
    edits: Vec<serde_json::Value>,
}

/// Asks a remote endpoint for edits over a minimal JSON wire contract.
pub struct RemoteProposer {
    endpoint: String,
    client: reqwest::blocking::Client,
    /// One extra attempt after a transport failure when set.
    retry_once: bool,
}

impl RemoteProposer {
    pub fn new(endpoint: impl Into<String>, timeout_s: f64) -> Result<RemoteProposer, ProposerError> {
        if !(timeout_s.is_finite() && timeout_s > 0.0) {
            return Err(ProposerError::Remote(format!(
                "timeout must be positive, got {timeout_s}"
            )));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(timeout_s))
            .build()
            .map_err(|e| ProposerError::Remote(e.to_string()))?;
        Ok(RemoteProposer {
            endpoint: endpoint.into(),
            client,
            retry_once: false,
        })
    }

    pub fn with_retry(mut self, retry_once: bool) -> RemoteProposer {
        self.retry_once = retry_once;
        self
    }

    /// Builds a proposer from `SPECFORGE_PROPOSER_URL` and
    /// `SPECFORGE_PROPOSER_TIMEOUT_S`; `Ok(None)` when no URL is configured.
    pub fn from_env() -> Result<Option<RemoteProposer>, ProposerError> {
        let Ok(url) = std::env::var(ENV_PROPOSER_URL) else {
            return Ok(None);
        };
        let timeout_s = match std::env::var(ENV_PROPOSER_TIMEOUT_S) {
            Ok(raw) => raw.parse::<f64>().map_err(|_| {
                ProposerError::Remote(format!("{ENV_PROPOSER_TIMEOUT_S} must be a number"))
            })?,
            Err(_) => DEFAULT_REMOTE_TIMEOUT_S,
        };
        RemoteProposer::new(url, timeout_s).map(Some)
    }

    /// The exact request body sent to the endpoint: canonical spec JSON,
    /// the diagnosis, and the catalog enumerated for the spec.
    pub fn request_payload(
        spec: &Spec,
        diagnosis: &Diagnosis,
        catalog: &[EditTemplate],
    ) -> serde_json::Value {
        serde_json::json!({
            "spec": spec_to_json(spec),
            "diagnosis": diagnosis,
            "catalog": catalog,
        })
    }

    fn post(&self, payload: &serde_json::Value) -> Result<RemoteResponse, String> {
        self.client
            .post(&self.endpoint)
            .json(payload)
            .send()
            .and_then(|resp| resp.error_for_status())
            .map_err(|e| e.to_string())
            .and_then(|resp| resp.json::<RemoteResponse>().map_err(|e| e.to_string()))
    }
}

impl Proposer for RemoteProposer {
    fn id(&self) -> &str {
        "remote"
    }

    /// Sends one request and filters the response. Transport failures,
    /// timeouts, and unparseable responses all yield an empty list (the
    /// budget is still spent); invalid edits are dropped with a warning.
    fn propose(
        &mut self,
        spec: &Spec,
        diagnosis: &Diagnosis,
    ) -> Result<Vec<Proposal>, ProposerError> {
        let catalog = enumerate_catalog(spec, &Primitive::ALL.into_iter().collect())?;
        let payload = RemoteProposer::request_payload(spec, diagnosis, &catalog);
        let response = match self.post(&payload) {
            Ok(r) => r,
            Err(first) if self.retry_once => match self.post(&payload) {
                Ok(r) => r,
                Err(second) => {
                    log::warn!("remote proposer failed twice ({first}; {second}); proposing nothing");
                    return Ok(Vec::new());
                }
            },
            Err(e) => {
                log::warn!("remote proposer failed ({e}); proposing nothing");
                return Ok(Vec::new());
            }
        };
        let mut proposals = Vec::new();
        for raw in response.edits {
            let edit = match serde_json::from_value::<Edit>(raw.clone()) {
                Ok(edit) => edit,
                Err(e) => {
                    log::warn!("discarding malformed remote edit {raw}: {e}");
                    continue;
                }
            };
            if let Err(e) = apply(spec, &edit) {
                log::warn!("discarding invalid remote edit: {e}");
                continue;
            }
            let diagnosis_ref = edit.target_cluster.clone();
            proposals.push(Proposal {
                edit,
                confidence: 0.5,
                diagnosis_ref,
            });
        }
        Ok(proposals)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::FieldOp;
    use crate::harness::{gen_coordinated_config, gen_suite};
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    fn diagnosis() -> Diagnosis {
        Diagnosis::default()
    }

    #[test]
    fn scriptable_replays_in_order_then_exhausts() {
        let e1 = Edit::single(FieldOp::set("agent.max_turns", 20u64));
        let e2 = Edit::single(FieldOp::set("engine.backend", "vllm"));
        let mut p = ScriptableProposer::new(vec![e1.clone(), e2.clone()]).unwrap();
        let spec = Spec::default();
        assert_eq!(p.propose(&spec, &diagnosis()).unwrap()[0].edit, e1);
        assert_eq!(p.propose(&spec, &diagnosis()).unwrap()[0].edit, e2);
        assert!(p.propose(&spec, &diagnosis()).unwrap().is_empty());
        assert!(p.is_exhausted());
    }

    #[test]
    fn empty_script_exhausts_immediately() {
        let mut p = ScriptableProposer::new(Vec::new()).unwrap();
        assert!(p.propose(&Spec::default(), &diagnosis()).unwrap().is_empty());
    }

    #[test]
    fn malformed_script_fails_at_load_time() {
        let err = ScriptableProposer::from_json(r#"[{"ops":[]}]"#).unwrap_err();
        assert!(matches!(err, ProposerError::Script(_)));
        let err = ScriptableProposer::from_json("not json").unwrap_err();
        assert!(matches!(err, ProposerError::Script(_)));
    }

    #[test]
    fn template_random_is_seed_deterministic_and_ignores_diagnosis() {
        let spec = Spec::default();
        let mut a = TemplateRandomProposer::full(9);
        let mut b = TemplateRandomProposer::full(9);
        let rich = Diagnosis {
            clusters: vec![ClusterDiagnosis {
                cluster: FailureCluster {
                    cluster_id: "x".to_string(),
                    description: String::new(),
                    member_task_ids: vec!["t".to_string()],
                    student_success_rate: 0.0,
                    teacher_success_rate: 1.0,
                },
                excerpts: Vec::new(),
            }],
        };
        for _ in 0..20 {
            let pa = a.propose(&spec, &diagnosis()).unwrap();
            let pb = b.propose(&spec, &rich).unwrap();
            assert_eq!(pa[0].edit, pb[0].edit);
            apply(&spec, &pa[0].edit).unwrap();
        }
    }

    #[test]
    fn template_random_respects_the_move_space() {
        let spec = Spec::default();
        let mut p =
            TemplateRandomProposer::new([Primitive::Engine].into_iter().collect(), 4);
        for _ in 0..30 {
            let proposals = p.propose(&spec, &diagnosis()).unwrap();
            let touched = proposals[0].edit.primitives().unwrap();
            assert_eq!(touched.into_iter().collect::<Vec<_>>(), vec![Primitive::Engine]);
        }
    }

    #[test]
    fn diagnosis_groups_and_bounds_excerpts() {
        let suite = gen_suite(&gen_coordinated_config(5)).unwrap();
        let tasks = suite.tasks();
        let report =
            crate::gate::score_report(&Spec::default(), &tasks, &suite.executor()).unwrap();
        let d = Diagnosis::from_outcomes(&tasks, &report.outcomes, 2);
        assert_eq!(d.clusters.len(), 3);
        for cluster in &d.clusters {
            assert!(cluster.excerpts.len() <= 2);
            assert!(cluster.excerpts.iter().all(|e| e.len() <= EXCERPT_CHAR_CAP));
            assert_eq!(cluster.cluster.teacher_success_rate, 1.0);
            assert_eq!(cluster.cluster.student_success_rate, 0.0);
        }
    }

    /// Serves exactly one HTTP request with a canned JSON body, capturing
    /// the request body for inspection.
    fn serve_once(body: String, capture: Arc<Mutex<String>>) -> std::net::SocketAddr {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 4096];
            let (headers_end, content_length) = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(pos) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    let headers = String::from_utf8_lossy(&buf[..pos]).to_string();
                    let length = headers
                        .lines()
                        .find_map(|line| {
                            let (name, value) = line.split_once(':')?;
                            name.eq_ignore_ascii_case("content-length")
                                .then(|| value.trim().parse::<usize>().ok())?
                        })
                        .unwrap_or(0);
                    break (pos + 4, length);
                }
            };
            while buf.len() < headers_end + content_length {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
            }
            let request_body =
                String::from_utf8_lossy(&buf[headers_end..headers_end + content_length])
                    .to_string();
            *capture.lock().unwrap() = request_body;
            let response = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(response.as_bytes()).unwrap();
        });
        addr
    }

    #[test]
    fn remote_filters_invalid_edits_and_parses_valid_ones() {
        let body = r#"{"edits":[
            {"ops":[{"path":"agent.max_turns","op":"set","value":20}],"target_cluster":"c1","rationale":"ok"},
            {"ops":[{"path":"agent.bogus","op":"set","value":1}],"rationale":"bad path"},
            {"ops":[{"path":"learning.enabled","op":"set","value":true}],"rationale":"not editable"}
        ]}"#;
        let capture = Arc::new(Mutex::new(String::new()));
        let addr = serve_once(body.to_string(), Arc::clone(&capture));
        let mut p = RemoteProposer::new(format!("http://{addr}/propose"), 5.0).unwrap();
        let proposals = p.propose(&Spec::default(), &diagnosis()).unwrap();
        assert_eq!(proposals.len(), 1);
        assert_eq!(proposals[0].edit.ops[0].path, "agent.max_turns");
        assert_eq!(proposals[0].diagnosis_ref.as_deref(), Some("c1"));

        let sent: serde_json::Value =
            serde_json::from_str(&capture.lock().unwrap()).unwrap();
        assert!(sent.get("spec").is_some());
        assert!(sent.get("diagnosis").is_some());
        assert!(sent.get("catalog").unwrap().as_array().unwrap().len() > 10);
    }

    #[test]
    fn remote_empty_edit_array_is_not_an_error() {
        let capture = Arc::new(Mutex::new(String::new()));
        let addr = serve_once(r#"{"edits":[]}"#.to_string(), Arc::clone(&capture));
        let mut p = RemoteProposer::new(format!("http://{addr}/propose"), 5.0).unwrap();
        assert!(p.propose(&Spec::default(), &diagnosis()).unwrap().is_empty());
    }

    #[test]
    fn remote_transport_failure_proposes_nothing() {
        // Bind then drop a listener so the port is closed.
        let addr = TcpListener::bind("127.0.0.1:0")
            .unwrap()
            .local_addr()
            .unwrap();
        let mut p = RemoteProposer::new(format!("http://{addr}/propose"), 0.5).unwrap();
        assert!(p.propose(&Spec::default(), &diagnosis()).unwrap().is_empty());
    }

    #[test]
    fn remote_unparseable_response_proposes_nothing() {
        let capture = Arc::new(Mutex::new(String::new()));
        let addr = serve_once("this is not json".to_string(), Arc::clone(&capture));
        let mut p = RemoteProposer::new(format!("http://{addr}/propose"), 5.0).unwrap();
        assert!(p.propose(&Spec::default(), &diagnosis()).unwrap().is_empty());
    }

    #[test]
    fn request_payload_is_deterministic() {
        let spec = Spec::default();
        let catalog =
            enumerate_catalog(&spec, &Primitive::ALL.into_iter().collect()).unwrap();
        let a = RemoteProposer::request_payload(&spec, &diagnosis(), &catalog);
        let b = RemoteProposer::request_payload(&spec, &diagnosis(), &catalog);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
