//! Newline-delimited JSON protocol for external models.
//!
//! Requests: `{"id":1,"op":"infer","tokens":["int","f",...]}` and
//! `{"id":2,"op":"infer_submodels","tokens":[...],"k":30,"base_seed":7}`.
//! Responses echo `id` and carry `logits`, `probs`, `layers` and `probe_logits`, or
//! `samples` (one such object per sub-model, plus `dropout_seed`). Failures are
//! `{"id":..,"error":".."}`. Unknown request fields are ignored.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{argmax, Classifier, ModelError, ModelOutput, SubmodelSample, TokenizedInput};

/// Cross-implementation tolerance for floating-point fields.
pub const WIRE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Body {
    logits: Vec<f64>,
    probs: Vec<f64>,
    layers: Vec<Vec<f64>>,
    probe_logits: Vec<Vec<f64>>,
}

impl From<ModelOutput> for Body {
    fn from(o: ModelOutput) -> Body {
        Body {
            logits: o.logits,
            probs: o.probs,
            layers: o.layer_snapshots,
            probe_logits: o.probe_logits,
        }
    }
}

impl From<Body> for ModelOutput {
    fn from(b: Body) -> ModelOutput {
        ModelOutput {
            logits: b.logits,
            probs: b.probs,
            layer_snapshots: b.layers,
            probe_logits: b.probe_logits,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Sample {
    dropout_seed: u64,
    #[serde(flatten)]
    body: Body,
}

fn error_line(id: Value, message: impl Into<String>) -> String {
    json!({"id": id, "error": message.into()}).to_string()
}

/// Answers one request line. Never panics on bad input.
pub fn handle_line(model: &dyn Classifier, line: &str) -> String {
    let req: Value = match serde_json::from_str(line) {
        Ok(v) => v,
        Err(e) => return error_line(Value::Null, format!("malformed request: {e}")),
    };
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    if !(id.is_i64() || id.is_u64()) {
        return error_line(id, "id must be an integer");
    }
    let tokens = match req.get("tokens").and_then(Value::as_array) {
        Some(arr) => match arr.iter().map(|t| t.as_str().map(str::to_string)).collect() {
            Some(t) => TokenizedInput::from_tokens(t),
            None => return error_line(id, "tokens must be strings"),
        },
        None => return error_line(id, "missing tokens"),
    };
    let result = match req.get("op").and_then(Value::as_str) {
        Some("infer") => model.infer(&tokens).map(|o| {
            let mut v = serde_json::to_value(Body::from(o)).unwrap();
            v["id"] = id.clone();
            v
        }),
        Some("infer_submodels") => {
            let Some(k) = req.get("k").and_then(Value::as_u64) else {
                return error_line(id, "k must be a non-negative integer");
            };
            let base_seed = match req.get("base_seed") {
                None => 0,
                Some(s) => match s.as_u64() {
                    Some(s) => s,
                    None => return error_line(id, "base_seed must be a non-negative integer"),
                },
            };
            let k = usize::try_from(k).unwrap_or(usize::MAX);
            if k > 100_000 {
                return error_line(id, "k too large");
            }
            model.infer_submodels(&tokens, k, base_seed).map(|samples| {
                let samples: Vec<Sample> = samples
                    .into_iter()
                    .map(|s| Sample {
                        dropout_seed: s.dropout_seed,
                        body: s.output.into(),
                    })
                    .collect();
                json!({"id": id.clone(), "samples": samples})
            })
        }
        Some(other) => return error_line(id, format!("unknown op '{other}'")),
        None => return error_line(id, "missing op"),
    };
    match result {
        Ok(v) => v.to_string(),
        Err(e) => error_line(id, e.to_string()),
    }
}

/// Serves requests line by line until end of input. Blank lines are skipped.
pub fn serve_lines<R: BufRead, W: Write>(
    model: &dyn Classifier,
    reader: R,
    mut writer: W,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        writeln!(writer, "{}", handle_line(model, &line))?;
        writer.flush()?;
    }
    Ok(())
}

/// Serves connections one at a time, each until the peer closes it.
/// Stops after `max_connections` when given.
pub fn serve_tcp(
    model: &dyn Classifier,
    listener: TcpListener,
    max_connections: Option<usize>,
) -> std::io::Result<()> {
    let mut served = 0;
    for stream in listener.incoming() {
        let stream = stream?;
        let reader = BufReader::new(stream.try_clone()?);
        // a client that hangs up mid-request only ends its own session
        let _ = serve_lines(model, reader, stream);
        served += 1;
        if max_connections.is_some_and(|m| served >= m) {
            break;
        }
    }
    Ok(())
}

/// A request/response channel to a model server.
pub trait Transport: Send {
    /// Sends one line and reads one line back.
    fn roundtrip(&mut self, line: &str) -> Result<String, String>;
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl TcpTransport {
    pub fn connect(addr: &str) -> Result<TcpTransport, String> {
        let stream = TcpStream::connect(addr).map_err(|e| format!("{addr}: {e}"))?;
        let reader = BufReader::new(stream.try_clone().map_err(|e| e.to_string())?);
        Ok(TcpTransport {
            reader,
            writer: stream,
        })
    }
}

fn exchange(reader: &mut impl BufRead, writer: &mut impl Write, line: &str) -> Result<String, String> {
    writeln!(writer, "{line}")
        .and_then(|_| writer.flush())
        .map_err(|e| format!("send failed: {e}"))?;
    let mut buf = String::new();
    match reader.read_line(&mut buf) {
        Ok(0) => Err("connection closed".into()),
        Ok(_) => Ok(buf.trim_end().to_string()),
        Err(e) => Err(format!("receive failed: {e}")),
    }
}

impl Transport for TcpTransport {
    fn roundtrip(&mut self, line: &str) -> Result<String, String> {
        exchange(&mut self.reader, &mut self.writer, line)
    }
}

/// A server child process spoken to over its stdin and stdout.
pub struct ProcessTransport {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessTransport {
    pub fn spawn(command_line: &str) -> Result<ProcessTransport, String> {
        let mut parts = command_line.split_whitespace();
        let program = parts.next().ok_or("empty command")?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| format!("{program}: {e}"))?;
        let stdin = child.stdin.take().unwrap();
        let stdout = BufReader::new(child.stdout.take().unwrap());
        Ok(ProcessTransport {
            child,
            stdin,
            stdout,
        })
    }
}

impl Transport for ProcessTransport {
    fn roundtrip(&mut self, line: &str) -> Result<String, String> {
        exchange(&mut self.stdout, &mut self.stdin, line)
    }
}

impl Drop for ProcessTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Opens `host:port`, `tcp://host:port`, or `cmd:<program and args>`.
pub fn connect(endpoint: &str) -> Result<Box<dyn Transport>, String> {
    if let Some(cmd) = endpoint.strip_prefix("cmd:") {
        return Ok(Box::new(ProcessTransport::spawn(cmd)?));
    }
    let addr = endpoint.strip_prefix("tcp://").unwrap_or(endpoint);
    Ok(Box::new(TcpTransport::connect(addr)?))
}

/// A [`Classifier`] backed by a model server.
pub struct RemoteModel {
    transport: Mutex<Box<dyn Transport>>,
    next_id: AtomicU64,
    num_classes: usize,
    num_layers: usize,
}

impl RemoteModel {
    /// Connects and learns the class and layer counts from one probe request.
    pub fn connect(endpoint: &str) -> Result<RemoteModel, ModelError> {
        let transport = connect(endpoint).map_err(ModelError::Remote)?;
        RemoteModel::over(transport)
    }

    pub fn over(transport: Box<dyn Transport>) -> Result<RemoteModel, ModelError> {
        let mut m = RemoteModel {
            transport: Mutex::new(transport),
            next_id: AtomicU64::new(1),
            num_classes: 0,
            num_layers: 0,
        };
        let probe = m.infer_raw(&TokenizedInput::from_tokens(vec!["int".into()]))?;
        m.num_classes = probe.probs.len();
        m.num_layers = probe.layer_snapshots.len();
        Ok(m)
    }

    fn call(&self, mut request: Value) -> Result<Value, ModelError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        request["id"] = json!(id);
        let reply = self
            .transport
            .lock()
            .map_err(|_| ModelError::Remote("transport poisoned".into()))?
            .roundtrip(&request.to_string())
            .map_err(ModelError::Remote)?;
        let v: Value = serde_json::from_str(&reply)
            .map_err(|e| ModelError::Remote(format!("malformed response: {e}")))?;
        if v.get("id") != Some(&json!(id)) {
            return Err(ModelError::Remote(format!("response id mismatch, expected {id}")));
        }
        if let Some(e) = v.get("error") {
            return Err(ModelError::Remote(e.as_str().unwrap_or("error").to_string()));
        }
        Ok(v)
    }

    fn infer_raw(&self, input: &TokenizedInput) -> Result<ModelOutput, ModelError> {
        if input.is_empty() {
            return Err(ModelError::EmptyTokenList);
        }
        let v = self.call(json!({"op": "infer", "tokens": input.tokens}))?;
        let body: Body = serde_json::from_value(v)
            .map_err(|e| ModelError::Remote(format!("bad infer response: {e}")))?;
        Ok(body.into())
    }
}

impl Classifier for RemoteModel {
    fn num_classes(&self) -> usize {
        self.num_classes
    }
    fn num_layers(&self) -> usize {
        self.num_layers
    }
    /// Not advertised by the protocol.
    fn dropout_rate(&self) -> f64 {
        f64::NAN
    }
    fn infer(&self, input: &TokenizedInput) -> Result<ModelOutput, ModelError> {
        self.infer_raw(input)
    }
    fn infer_submodels(
        &self,
        input: &TokenizedInput,
        k: usize,
        base_seed: u64,
    ) -> Result<Vec<SubmodelSample>, ModelError> {
        if k < 2 {
            return Err(ModelError::KTooSmall(k));
        }
        if input.is_empty() {
            return Err(ModelError::EmptyTokenList);
        }
        let v = self.call(json!({
            "op": "infer_submodels", "tokens": input.tokens, "k": k, "base_seed": base_seed
        }))?;
        let samples: Vec<Sample> = serde_json::from_value(v["samples"].clone())
            .map_err(|e| ModelError::Remote(format!("bad infer_submodels response: {e}")))?;
        if samples.len() != k {
            return Err(ModelError::Remote(format!("expected {k} samples, got {}", samples.len())));
        }
        Ok(samples
            .into_iter()
            .map(|s| SubmodelSample {
                dropout_seed: s.dropout_seed,
                output: s.body.into(),
            })
            .collect())
    }
}

// ---- conformance checking --------------------------------------------------

const GOLDEN_REQUESTS: &str = include_str!("golden_requests.jsonl");

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("connection failed: {0}")]
    ConnectionFailed(String),
    #[error("schema violation ({0})")]
    SchemaViolation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConformanceReport {
    pub checks: Vec<CheckResult>,
}

impl ConformanceReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The first failed check, as an error.
    pub fn violation(&self) -> Option<ProtocolError> {
        self.checks
            .iter()
            .find(|c| !c.passed)
            .map(|c| ProtocolError::SchemaViolation(c.name.clone()))
    }
}

pub fn check_protocol(endpoint: &str) -> Result<ConformanceReport, ProtocolError> {
    let mut t = connect(endpoint).map_err(ProtocolError::ConnectionFailed)?;
    Ok(check_transport(t.as_mut()))
}

struct Checker<'a> {
    t: &'a mut dyn Transport,
    checks: Vec<CheckResult>,
}

type Check = Result<(), String>;

impl Checker<'_> {
    fn record(&mut self, name: &str, outcome: Check) {
        let (passed, detail) = match outcome {
            Ok(()) => (true, String::new()),
            Err(d) => (false, d),
        };
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }

    fn send(&mut self, line: &str) -> Result<Value, String> {
        let reply = self.t.roundtrip(line)?;
        serde_json::from_str(&reply).map_err(|e| format!("response is not JSON: {e}"))
    }
}

fn numbers(v: &Value, field: &str) -> Result<Vec<f64>, String> {
    v.get(field)
        .and_then(Value::as_array)
        .ok_or(format!("'{field}' missing or not an array"))?
        .iter()
        .map(|x| x.as_f64().ok_or(format!("'{field}' holds a non-number")))
        .collect()
}

fn matrix(v: &Value, field: &str) -> Result<Vec<Vec<f64>>, String> {
    let rows = v
        .get(field)
        .and_then(Value::as_array)
        .ok_or(format!("'{field}' missing or not an array"))?;
    rows.iter()
        .map(|r| {
            r.as_array()
                .ok_or(format!("'{field}' row is not an array"))?
                .iter()
                .map(|x| x.as_f64().ok_or(format!("'{field}' holds a non-number")))
                .collect()
        })
        .collect()
}

fn body_of(v: &Value) -> Result<ModelOutput, String> {
    if let Some(e) = v.get("error") {
        return Err(format!("server error: {e}"));
    }
    Ok(ModelOutput {
        logits: numbers(v, "logits")?,
        probs: numbers(v, "probs")?,
        layer_snapshots: matrix(v, "layers")?,
        probe_logits: matrix(v, "probe_logits")?,
    })
}

/// (C, L, H) of an output, or why it is inconsistent.
fn shape_of(o: &ModelOutput) -> Result<(usize, usize, usize), String> {
    let c = o.probs.len();
    if c < 2 || o.logits.len() != c {
        return Err(format!("{} logits vs {c} probs (need >= 2)", o.logits.len()));
    }
    let l = o.layer_snapshots.len();
    if l < 2 {
        return Err(format!("{l} layers (need >= 2)"));
    }
    let h = o.layer_snapshots[0].len();
    if h == 0 || o.layer_snapshots.iter().any(|s| s.len() != h) {
        return Err("layer snapshots differ in width".into());
    }
    if o.probe_logits.len() != l || o.probe_logits.iter().any(|p| p.len() != c) {
        return Err(format!("probe_logits must be {l} rows of {c}"));
    }
    Ok((c, l, h))
}

fn normalized(o: &ModelOutput) -> Check {
    let sum: f64 = o.probs.iter().sum();
    if (sum - 1.0).abs() > WIRE_TOLERANCE || o.probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(format!("probs sum to {sum}"));
    }
    Ok(())
}

fn close(a: &ModelOutput, b: &ModelOutput) -> bool {
    let flat = |o: &ModelOutput| -> Vec<f64> {
        let mut v = o.logits.clone();
        v.extend(&o.probs);
        o.layer_snapshots.iter().for_each(|s| v.extend(s));
        o.probe_logits.iter().for_each(|s| v.extend(s));
        v
    };
    let (x, y) = (flat(a), flat(b));
    x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= WIRE_TOLERANCE)
}

/// Runs every conformance check over an open transport.
pub fn check_transport(t: &mut dyn Transport) -> ConformanceReport {
    let golden: Vec<Value> = GOLDEN_REQUESTS
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).expect("golden request is JSON"))
        .collect();
    let infer_req = golden[0].clone();
    let sub_req = golden[1].clone();
    let mut c = Checker {
        t,
        checks: Vec::new(),
    };

    let first = c.send(&infer_req.to_string());
    let out = first.clone().and_then(|v| body_of(&v));
    c.record("infer-schema", out.clone().map(|_| ()));
    let mut id_ok = first.as_ref().map_err(Clone::clone).and_then(|v| {
        if v.get("id") == infer_req.get("id") {
            Ok(())
        } else {
            Err(format!("sent id {}, got {:?}", infer_req["id"], v.get("id")))
        }
    });
    for id in [0u64, 4_000_000_000, 9_007_199_254_740_000] {
        let mut req = infer_req.clone();
        req["id"] = json!(id);
        if id_ok.is_ok() {
            id_ok = c.send(&req.to_string()).and_then(|v| match v.get("id") {
                Some(got) if got == &json!(id) => Ok(()),
                other => Err(format!("sent id {id}, got {other:?}")),
            });
        }
    }
    c.record("id-echo", id_ok);
    let shape = out.as_ref().map_err(Clone::clone).and_then(shape_of);
    c.record("shape", shape.clone().map(|_| ()));
    c.record(
        "normalization",
        out.as_ref().map_err(Clone::clone).and_then(normalized),
    );
    c.record(
        "argmax-consistency",
        out.as_ref().map_err(Clone::clone).and_then(|o| {
            if argmax(&o.logits) == argmax(&o.probs) {
                Ok(())
            } else {
                Err("argmax(probs) != argmax(logits)".into())
            }
        }),
    );
    let again = c.send(&infer_req.to_string()).and_then(|v| body_of(&v));
    c.record(
        "determinism",
        match (&out, &again) {
            (Ok(a), Ok(b)) if close(a, b) => Ok(()),
            (Ok(_), Ok(_)) => Err("repeated infer differs".into()),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        },
    );

    let k = sub_req["k"].as_u64().unwrap_or(3) as usize;
    let subs = c.send(&sub_req.to_string()).and_then(|v| {
        if v.get("id") != sub_req.get("id") {
            return Err("id not echoed".to_string());
        }
        let samples = v
            .get("samples")
            .and_then(Value::as_array)
            .ok_or(format!("'samples' missing: {v}"))?;
        if samples.len() != k {
            return Err(format!("expected {k} samples, got {}", samples.len()));
        }
        samples
            .iter()
            .map(|s| {
                let o = body_of(s)?;
                normalized(&o)?;
                if s.get("dropout_seed").and_then(Value::as_u64).is_none() {
                    return Err("sample lacks dropout_seed".into());
                }
                Ok(o)
            })
            .collect::<Result<Vec<_>, String>>()
    });
    c.record(
        "submodels-schema",
        subs.as_ref().map_err(Clone::clone).and_then(|samples| {
            let want = shape.clone()?;
            for s in samples {
                if shape_of(s)? != want {
                    return Err("sample shape differs from infer".into());
                }
            }
            Ok(())
        }),
    );
    let subs_again = c.send(&sub_req.to_string()).and_then(|v| {
        v.get("samples")
            .and_then(Value::as_array)
            .ok_or("'samples' missing".to_string())?
            .iter()
            .map(body_of)
            .collect::<Result<Vec<_>, _>>()
    });
    c.record(
        "submodels-determinism",
        match (&subs, &subs_again) {
            (Ok(a), Ok(b)) if a.len() == b.len() && a.iter().zip(b).all(|(x, y)| close(x, y)) => Ok(()),
            (Ok(_), Ok(_)) => Err("repeated infer_submodels differs".into()),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        },
    );

    let mut small = sub_req.clone();
    small["k"] = json!(1);
    small["id"] = json!(77);
    let r = c.send(&small.to_string()).and_then(|v| {
        match (v.get("id"), v.get("error").and_then(Value::as_str)) {
            (Some(id), Some(msg)) if id == &json!(77) && msg.contains("k must be >= 2") => Ok(()),
            _ => Err(format!("expected error 'k must be >= 2' with id 77, got {v}")),
        }
    });
    c.record("k-too-small", r);

    let mut bogus = infer_req.clone();
    bogus["op"] = json!("no_such_op");
    bogus["id"] = json!(78);
    let r = c.send(&bogus.to_string()).and_then(|v| {
        if v.get("id") == Some(&json!(78)) && v.get("error").is_some() {
            Ok(())
        } else {
            Err(format!("expected an error response with id 78, got {v}"))
        }
    });
    c.record("unknown-op", r);

    let r = c.send("{this is not json").and_then(|v| {
        if v.get("error").is_some() {
            Ok(())
        } else {
            Err(format!("expected an error response, got {v}"))
        }
    });
    let r = r.and_then(|_| {
        let v = c.send(&infer_req.to_string())?;
        body_of(&v).map(|_| ())
    });
    c.record("malformed-request", r);

    let mut extra = infer_req.clone();
    extra["unexpected_field"] = json!({"nested": [1, 2]});
    let r = c.send(&extra.to_string()).and_then(|v| body_of(&v)).and_then(|o| match &out {
        Ok(a) if close(a, &o) => Ok(()),
        Ok(_) => Err("extra field changed the answer".into()),
        Err(e) => Err(e.clone()),
    });
    c.record("unknown-fields-ignored", r);

    ConformanceReport { checks: c.checks }
}
