//! HTTP gateway over a controller cluster and its switch fabric.
//!
//! [`Gateway::handle`] is a pure request/response function; [`serve`] puts
//! it behind axum. Requests are applied one at a time.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body};
use axum::extract::{Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Router;
use distb_core::control_plane::{AccessDecision, AccessRequest, ControllerCluster};
use distb_core::data_plane::{Counters, Fabric, FlowRule, RuleSet, SwitchId, Verdict};
use distb_core::engine::World;
use distb_core::ledger::{BlockSummary, Chain};
use distb_core::{Digest, SimTime};
use serde::Serialize;
use serde_json::{json, Value};

pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";
/// Request bodies larger than this are rejected.
pub const MAX_BODY_BYTES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
    Other,
}

#[derive(Clone, Debug)]
pub struct ApiRequest {
    pub method: Method,
    /// Path with optional query string, e.g. `/chain?kind=data`.
    pub path: String,
    /// Raw `Authorization` header value.
    pub authorization: Option<String>,
    pub body: Vec<u8>,
}

impl ApiRequest {
    pub fn get(path: &str) -> Self {
        Self {
            method: Method::Get,
            path: path.into(),
            authorization: None,
            body: Vec::new(),
        }
    }

    pub fn post(path: &str, body: impl Into<Vec<u8>>) -> Self {
        Self {
            method: Method::Post,
            path: path.into(),
            authorization: None,
            body: body.into(),
        }
    }

    /// Adds `Authorization: Bearer principal:token`.
    pub fn bearer(mut self, principal: &str, token: &str) -> Self {
        self.authorization = Some(format!("Bearer {principal}:{token}"));
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApiResponse {
    pub status: u16,
    pub body: Value,
}

impl ApiResponse {
    fn ok(body: impl Serialize) -> Self {
        Self {
            status: 200,
            body: serde_json::to_value(body).expect("response bodies serialize"),
        }
    }

    fn error(status: u16, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "error": message.into() }),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SwitchDesc {
    pub dpid: SwitchId,
    pub table_size: usize,
    pub table_hash: Digest,
    pub counters: Counters,
    pub isolated: bool,
    pub compromised: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowStats {
    pub dpid: SwitchId,
    /// The switch's actual table in canonical order.
    pub flows: Vec<FlowRule>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RuleUpdateAck {
    pub index: u64,
    pub block_hash: Digest,
    pub rules: usize,
    /// Simulated seconds at which every replica and switch has the block.
    pub completes_at: f64,
}

pub struct Gateway {
    fabric: Fabric,
    cluster: ControllerCluster,
    now: SimTime,
}

impl Gateway {
    pub fn new(fabric: Fabric, cluster: ControllerCluster, now: SimTime) -> Self {
        Self { fabric, cluster, now }
    }

    /// Attaches to a world's fabric and controllers at its current time.
    pub fn from_world(world: World) -> Self {
        let now = world.now();
        let World { fabric, cluster, .. } = world;
        Self::new(fabric, cluster, now)
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn cluster(&self) -> &ControllerCluster {
        &self.cluster
    }

    /// Mutable fabric access for test harnesses that tamper with switches.
    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn handle(&mut self, req: ApiRequest) -> ApiResponse {
        let (path, query) = req.path.split_once('?').unwrap_or((&req.path, ""));
        let segments: Vec<&str> = path.trim_matches('/').split('/').collect();
        match (req.method, segments.as_slice()) {
            (Method::Get, ["chain"]) => self.chain(query),
            (Method::Post, ["rules"]) => self.post_rules(&req),
            (Method::Get, ["stats", "desc", id]) => self.with_switch(id, |g, id| g.desc(id)),
            (Method::Get, ["stats", "flow", id]) => self.with_switch(id, |g, id| g.flows(id)),
            (Method::Post, ["verify", id]) => match self.authorize(&req) {
                Ok(()) => self.with_switch(id, |g, id| g.verify(id)),
                Err(resp) => resp,
            },
            (_, ["chain"] | ["rules"] | ["stats", "desc" | "flow", _] | ["verify", _]) => {
                ApiResponse::error(405, "method not allowed")
            }
            _ => ApiResponse::error(404, format!("no route for {path}")),
        }
    }

    fn chain(&self, query: &str) -> ApiResponse {
        let mut kind = "control";
        for pair in query.split('&').filter(|p| !p.is_empty()) {
            match pair.split_once('=') {
                Some(("kind", v)) => kind = v,
                _ => return ApiResponse::error(400, format!("unknown query parameter `{pair}`")),
            }
        }
        let chain: &Chain = match kind {
            "control" => self.cluster.control_chain(),
            "data" => self.cluster.data_chain(),
            other => return ApiResponse::error(400, format!("kind must be control or data, got `{other}`")),
        };
        ApiResponse::ok(chain.blocks().iter().map(BlockSummary::from).collect::<Vec<_>>())
    }

    fn authorize(&mut self, req: &ApiRequest) -> Result<(), ApiResponse> {
        let Some(cred) = req
            .authorization
            .as_deref()
            .and_then(|h| h.strip_prefix("Bearer "))
            .and_then(|c| c.split_once(':'))
        else {
            return Err(ApiResponse::error(401, "expected `Authorization: Bearer principal:token`"));
        };
        let request = AccessRequest {
            principal: cred.0.to_string(),
            signature_token: cred.1.to_string(),
        };
        match self.cluster.authorize(&request, self.now) {
            AccessDecision::Granted => Ok(()),
            AccessDecision::Denied => Err(ApiResponse::error(403, "access denied")),
        }
    }

    fn post_rules(&mut self, req: &ApiRequest) -> ApiResponse {
        if let Err(resp) = self.authorize(req) {
            return resp;
        }
        let de = &mut serde_json::Deserializer::from_slice(&req.body);
        let rules: Vec<FlowRule> = match serde_path_to_error::deserialize(de) {
            Ok(r) => r,
            Err(e) => {
                let field = field_path(&e.path().to_string(), &e.inner().to_string());
                return ApiResponse {
                    status: 400,
                    body: json!({ "error": e.inner().to_string(), "field": field }),
                };
            }
        };
        let rules = match RuleSet::from_rules(rules) {
            Ok(r) => r,
            Err(e) => return ApiResponse::error(400, e.to_string()),
        };
        if let Some(r) = rules.iter().find(|r| self.fabric.switch(r.dpid).is_none()) {
            return ApiResponse::error(400, format!("unknown dpid {}", r.dpid));
        }
        let n = rules.len();
        match self.cluster.submit_rule_update(&mut self.fabric, rules, self.now) {
            Ok(b) => ApiResponse::ok(RuleUpdateAck {
                index: b.block.index,
                block_hash: b.block.block_hash,
                rules: n,
                completes_at: b.completes_at.as_secs_f64(),
            }),
            Err(e) => ApiResponse::error(500, e.to_string()),
        }
    }

    fn with_switch(&mut self, raw: &str, f: impl FnOnce(&mut Self, SwitchId) -> ApiResponse) -> ApiResponse {
        match raw.parse::<u32>().map(SwitchId) {
            Ok(id) if self.fabric.switch(id).is_some() => f(self, id),
            Ok(id) => ApiResponse::error(404, format!("unknown switch {id}")),
            Err(_) => ApiResponse::error(400, format!("switch id must be an integer, got `{raw}`")),
        }
    }

    fn desc(&self, id: SwitchId) -> ApiResponse {
        let sw = self.fabric.switch(id).expect("checked");
        ApiResponse::ok(SwitchDesc {
            dpid: id,
            table_size: sw.table().len(),
            table_hash: sw.flow_table_hash(),
            counters: sw.counters,
            isolated: sw.isolated,
            compromised: sw.compromised,
        })
    }

    fn flows(&self, id: SwitchId) -> ApiResponse {
        let sw = self.fabric.switch(id).expect("checked");
        ApiResponse::ok(FlowStats {
            dpid: id,
            flows: sw.table().iter().cloned().collect(),
        })
    }

    fn verify(&self, id: SwitchId) -> ApiResponse {
        let sw = self.fabric.switch(id).expect("checked");
        if sw.isolated || self.cluster.is_isolated(id) {
            return ApiResponse::error(409, format!("switch {id} is isolated"));
        }
        let expected = self.cluster.effective_rules().slice(id).digest();
        let verdict: Verdict = sw.verify(expected);
        ApiResponse::ok(verdict)
    }
}

/// `[0]` plus "missing field `priority`" becomes `[0].priority`.
fn field_path(path: &str, message: &str) -> String {
    let missing = message
        .strip_prefix("missing field `")
        .and_then(|rest| rest.split('`').next());
    match (path, missing) {
        (".", Some(f)) => f.to_string(),
        (p, Some(f)) => format!("{p}.{f}"),
        (p, None) => p.to_string(),
    }
}

pub type Shared = Arc<Mutex<Gateway>>;

pub fn router(gateway: Shared) -> Router {
    Router::new().fallback(dispatch).with_state(gateway)
}

async fn dispatch(State(gw): State<Shared>, req: Request) -> Response {
    let method = match *req.method() {
        axum::http::Method::GET => Method::Get,
        axum::http::Method::POST => Method::Post,
        _ => Method::Other,
    };
    let path = req
        .uri()
        .path_and_query()
        .map(|p| p.as_str().to_string())
        .unwrap_or_else(|| "/".into());
    let authorization = req
        .headers()
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string);
    let body = match to_bytes(req.into_body(), MAX_BODY_BYTES).await {
        Ok(b) => b.to_vec(),
        Err(_) => return json_response(ApiResponse::error(413, "body too large")),
    };
    let resp = gw.lock().expect("gateway lock").handle(ApiRequest {
        method,
        path,
        authorization,
        body,
    });
    json_response(resp)
}

fn json_response(resp: ApiResponse) -> Response {
    let status = StatusCode::from_u16(resp.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut r = (status, Body::from(resp.body.to_string())).into_response();
    r.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    r
}

/// Binds `addr` and serves until the process is stopped. Returns the
/// bound address through `on_bound` before accepting connections.
pub async fn serve(gateway: Gateway, addr: SocketAddr, on_bound: impl FnOnce(SocketAddr)) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(Arc::new(Mutex::new(gateway)))).await
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_paths() {
        assert_eq!(field_path("[0]", "missing field `priority` at line 1 column 9"), "[0].priority");
        assert_eq!(field_path(".", "missing field `dpid`"), "dpid");
        assert_eq!(field_path("[1].match.nw_dst", "invalid IP address syntax"), "[1].match.nw_dst");
    }
}
