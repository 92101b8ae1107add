use std::net::SocketAddr;

use distb_core::data_plane::{FlowRule, RuleSet};
use distb_core::engine::{ScenarioConfig, World};
use distb_core::ledger::{validate_chain, ChainKind};
use distb_core::traffic::{tamper_switch, TamperMutation};
use distb_core::Digest;
use distb_gateway::{ApiRequest, Gateway};
use serde_json::{json, Value};

fn gateway() -> Gateway {
    let mut c = ScenarioConfig::p1();
    c.difficulty = 4;
    Gateway::from_world(World::build(c).unwrap())
}

fn two_rules() -> Value {
    json!([
        {"dpid": 1, "priority": 300, "match": {"nw_dst": "10.0.0.9"}, "actions": ["OUTPUT:2"]},
        {"dpid": 2, "priority": 300, "match": {"nw_src": "10.0.0.9"}, "actions": []}
    ])
}

fn post_rules(g: &mut Gateway, body: &Value) -> distb_gateway::ApiResponse {
    g.handle(ApiRequest::post("/rules", body.to_string()).bearer("admin", "distb-admin"))
}

#[test]
fn fresh_chain_is_genesis_only() {
    let mut g = gateway();
    let r = g.handle(ApiRequest::get("/chain"));
    assert_eq!(r.status, 200);
    assert_eq!(r.body.as_array().unwrap().len(), 1);
    assert_eq!(r.body[0]["index"], 0);
    assert_eq!(r.body[0]["payload_kind"], "rule_update");
    let d = g.handle(ApiRequest::get("/chain?kind=data"));
    assert_eq!(d.body[0]["payload_kind"], "dump_record");
    assert_eq!(g.handle(ApiRequest::get("/chain?kind=nope")).status, 400);
}

#[test]
fn posted_rules_land_on_chain_and_switches() {
    let mut g = gateway();
    let r = post_rules(&mut g, &two_rules());
    assert_eq!(r.status, 200, "{}", r.body);
    assert_eq!(r.body["index"], 1);
    assert_eq!(r.body["rules"], 2);
    let chain = g.handle(ApiRequest::get("/chain")).body;
    let blocks = chain.as_array().unwrap();
    assert_eq!(blocks.len(), 2);
    assert_eq!(blocks[1]["block_hash"], r.body["block_hash"]);
    // client-side link check
    assert_eq!(blocks[1]["prev_hash"], blocks[0]["block_hash"]);
    validate_chain(g.cluster().control_chain()).unwrap();
    assert_eq!(g.cluster().control_chain().kind(), ChainKind::Control);
    let flows = g.handle(ApiRequest::get("/stats/flow/1")).body;
    assert_eq!(flows["flows"].as_array().unwrap().len(), 1);
}

#[test]
fn malformed_body_names_the_field() {
    let mut g = gateway();
    let body = json!([{"dpid": 1, "match": {}, "actions": []}]);
    let r = post_rules(&mut g, &body);
    assert_eq!(r.status, 400);
    assert_eq!(r.body["field"], "[0].priority");
    let bad_ip = json!([{"dpid": 1, "priority": 1, "match": {"nw_dst": "x"}, "actions": []}]);
    assert_eq!(post_rules(&mut g, &bad_ip).body["field"], "[0].match.nw_dst");
    assert_eq!(post_rules(&mut g, &json!([{"dpid": 77, "priority": 1, "match": {}, "actions": []}])).status, 400);
    assert_eq!(g.cluster().control_chain().len(), 1);
}

#[test]
fn bad_token_is_denied_and_logged() {
    let mut g = gateway();
    let r = g.handle(ApiRequest::post("/rules", two_rules().to_string()).bearer("admin", "wrong"));
    assert_eq!(r.status, 403);
    assert_eq!(g.handle(ApiRequest::post("/rules", two_rules().to_string())).status, 401);
    assert_eq!(g.cluster().control_chain().len(), 1);
    let log = g.cluster().access_log();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].principal, "admin");
}

#[test]
fn desc_hash_matches_offline_rehash_of_flow_dump() {
    let mut g = gateway();
    post_rules(&mut g, &two_rules());
    let desc = g.handle(ApiRequest::get("/stats/desc/1"));
    assert_eq!(desc.status, 200);
    let flows: Vec<FlowRule> = serde_json::from_value(g.handle(ApiRequest::get("/stats/flow/1")).body["flows"].clone()).unwrap();
    let offline = Digest::of(&RuleSet::from_rules(flows).unwrap().canonical_bytes());
    assert_eq!(desc.body["table_hash"], offline.to_hex());
    assert_eq!(g.handle(ApiRequest::get("/stats/desc/99")).status, 404);
    assert_eq!(g.handle(ApiRequest::get("/stats/desc/x")).status, 400);
}

#[test]
fn verify_reports_tampering_and_refuses_isolated() {
    let mut g = gateway();
    let verify = |g: &mut Gateway, id: u32| g.handle(ApiRequest::post(&format!("/verify/{id}"), "").bearer("admin", "distb-admin"));
    let clean = verify(&mut g, 2);
    assert_eq!(clean.status, 200);
    assert_eq!(clean.body["verdict"], "consistent");
    let sw = g.fabric_mut().switch_mut(distb_core::data_plane::SwitchId(2)).unwrap();
    let victim = sw.table().iter().next().unwrap().clone();
    tamper_switch(sw, &TamperMutation::EditPriority { key: victim.key(), new_priority: victim.priority + 1 }).unwrap();
    let bad = verify(&mut g, 2);
    assert_eq!(bad.body["verdict"], "inconsistent");
    assert_eq!(bad.body["details"]["kind"], "digest");
    g.fabric_mut().set_isolated(distb_core::data_plane::SwitchId(2), true);
    assert_eq!(verify(&mut g, 2).status, 409);
    assert_eq!(verify(&mut g, 42).status, 404);
}

#[test]
fn unknown_routes_and_methods() {
    let mut g = gateway();
    assert_eq!(g.handle(ApiRequest::get("/nope")).status, 404);
    assert_eq!(g.handle(ApiRequest::get("/rules")).status, 405);
}

#[tokio::test(flavor = "multi_thread")]
async fn http_round_trip() {
    let (tx, rx) = tokio::sync::oneshot::channel::<SocketAddr>();
    let gw = gateway();
    tokio::spawn(async move {
        distb_gateway::serve(gw, "127.0.0.1:0".parse().unwrap(), |a| tx.send(a).unwrap()).await.unwrap();
    });
    let addr = rx.await.unwrap();
    let client = reqwest::Client::new();
    let url = |p: &str| format!("http://{addr}{p}");
    let r = client.post(url("/rules")).bearer_auth("admin:distb-admin").json(&two_rules()).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let chain: Value = client.get(url("/chain")).send().await.unwrap().json().await.unwrap();
    assert_eq!(chain.as_array().unwrap().len(), 2);
    let denied = client.post(url("/rules")).bearer_auth("admin:nope").json(&two_rules()).send().await.unwrap();
    assert_eq!(denied.status(), 403);
    let body: Value = denied.json().await.unwrap();
    assert_eq!(body["error"], "access denied");
}
