use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use teachnow_core::event::read_log_file;
use teachnow_core::{replay, CourseConfig, JsonlSink, MemoryLog, Timestamp};
use teachnow_service::{router, App, ManualClock, Principal, TokenEntry};
use tower::ServiceExt;

const T0: i64 = 1_700_000_000_000;

fn tokens() -> Vec<TokenEntry> {
    let mut out = vec![TokenEntry { token: "admin".into(), principal: Principal::Admin }];
    for s in ["s1", "s2", "s3"] {
        out.push(TokenEntry { token: format!("tok-{s}"), principal: Principal::Student { id: s.into() } });
    }
    for t in ["t1", "t2"] {
        out.push(TokenEntry { token: format!("tok-{t}"), principal: Principal::Teacher { id: t.into() } });
    }
    out
}

fn course() -> CourseConfig {
    CourseConfig { experiment_fraction: 1.0, ..CourseConfig::with_numbered_assignments(5) }
}

struct Harness {
    app: App,
    clock: ManualClock,
    router: Router,
}

impl Harness {
    fn new() -> Self {
        Self::with_sink(Box::new(MemoryLog::default()), &[])
    }

    fn with_sink(sink: Box<dyn teachnow_core::EventSink + Send>, history: &[teachnow_core::EventRecord]) -> Self {
        let clock = ManualClock::new(Timestamp(T0));
        let app = App::start(history, course(), sink, Box::new(clock.clone()), tokens()).unwrap();
        Self { router: router(app.clone()), app, clock }
    }

    async fn raw(&self, method: &str, path: &str, token: Option<&str>, body: &str) -> axum::response::Response {
        let mut req = Request::builder().method(method).uri(path).header("content-type", "application/json");
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        self.router.clone().oneshot(req.body(Body::from(body.to_owned())).unwrap()).await.unwrap()
    }

    async fn call(&self, method: &str, path: &str, token: &str, body: Value) -> (StatusCode, Value) {
        let body = if body.is_null() { String::new() } else { body.to_string() };
        let res = self.raw(method, path, Some(token), &body).await;
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }

    async fn beat(&self, student: &str, assignment: &str) {
        let body = json!({ "kind": "IDE_ASSIGNMENT", "assignment_id": assignment });
        let (status, _) =
            self.call("POST", &format!("/students/{student}/heartbeat"), &format!("tok-{student}"), body).await;
        assert_eq!(status, StatusCode::OK);
    }

    /// Opens a ticket for `t1` with only `s1` online; returns (ticket, nudge, deadline).
    async fn offer(&self) -> (u64, u64, i64) {
        self.beat("s1", "a2").await;
        let (status, ticket) = self.call("POST", "/tickets", "tok-t1", Value::Null).await;
        assert_eq!(status, StatusCode::CREATED, "{ticket}");
        assert_eq!(ticket["state"]["state"], "NUDGE_PENDING");
        let nudge = ticket["state"]["id"].as_u64().unwrap();
        let deadline = self.app.read(|s| s.nudge(teachnow_core::NudgeId(nudge)).unwrap().deadline.0);
        (ticket["ticket_id"].as_u64().unwrap(), nudge, deadline)
    }

    async fn stream(&self, token: &str, query: &str) -> Sse {
        let res = self.raw("GET", &format!("/stream?token={token}{query}"), None, "").await;
        assert_eq!(res.status(), StatusCode::OK);
        Sse { body: res.into_body(), buf: String::new() }
    }
}

struct Sse {
    body: Body,
    buf: String,
}

#[derive(Debug)]
struct Frame {
    id: u64,
    event: String,
    data: Value,
}

impl Sse {
    async fn next(&mut self) -> Option<Frame> {
        loop {
            if let Some(end) = self.buf.find("\n\n") {
                let block: String = self.buf.drain(..end + 2).collect();
                let (mut id, mut event, mut data) = (None, String::new(), String::new());
                for line in block.lines() {
                    if let Some(v) = line.strip_prefix("id:") {
                        id = v.trim().parse().ok();
                    } else if let Some(v) = line.strip_prefix("event:") {
                        event = v.trim().to_owned();
                    } else if let Some(v) = line.strip_prefix("data:") {
                        data.push_str(v.trim());
                    }
                }
                match id {
                    Some(id) => return Some(Frame { id, event, data: serde_json::from_str(&data).unwrap() }),
                    None => continue,
                }
            }
            let frame = tokio::time::timeout(Duration::from_millis(500), self.body.frame()).await.ok()??.ok()?;
            if let Ok(bytes) = frame.into_data() {
                self.buf.push_str(std::str::from_utf8(&bytes).unwrap());
            }
        }
    }

    async fn all(&mut self) -> Vec<Frame> {
        let mut out = Vec::new();
        while let Some(f) = self.next().await {
            out.push(f);
        }
        out
    }
}

#[tokio::test]
async fn ticket_is_created_and_busy_teacher_conflicts() {
    let h = Harness::new();
    h.offer().await;
    let (status, body) = h.call("POST", "/tickets", "tok-t1", json!({})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["error"], "TeacherBusy");

    let (status, body) = h.call("POST", "/tickets", "tok-t2", json!({ "policy": "MOST_BEHIND" })).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["state"]["state"], "EXHAUSTED", "only student is already nudged");
}

#[tokio::test]
async fn response_deadline_is_inclusive() {
    let h = Harness::new();
    let (_, nudge, deadline) = h.offer().await;
    h.clock.set(Timestamp(deadline));
    let (status, body) =
        h.call("POST", &format!("/nudges/{nudge}/respond"), "tok-s1", json!({ "response": "ACCEPT" })).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["ticket"]["state"]["state"], "MATCHED");
    assert_eq!(body["session"]["student_id"], "s1");
    assert_eq!(body["session"]["assignment_id"], "a2");
}

#[tokio::test]
async fn late_response_is_gone() {
    let h = Harness::new();
    let (_, nudge, deadline) = h.offer().await;
    h.clock.set(Timestamp(deadline + 1));
    let (status, body) =
        h.call("POST", &format!("/nudges/{nudge}/respond"), "tok-s1", json!({ "response": "ACCEPT" })).await;
    assert_eq!(status, StatusCode::GONE);
    assert_eq!(body["error"], "NudgeExpired");
    let (status, _) =
        h.call("POST", &format!("/nudges/{nudge}/respond"), "tok-s1", json!({ "response": "DECLINE" })).await;
    assert_eq!(status, StatusCode::GONE);
}

#[tokio::test]
async fn second_decline_is_rejected() {
    let h = Harness::new();
    let (_, nudge, _) = h.offer().await;
    let path = format!("/nudges/{nudge}/respond");
    let (status, _) = h.call("POST", &path, "tok-s1", json!({ "response": "DECLINE" })).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = h.call("POST", &path, "tok-s1", json!({ "response": "DECLINE" })).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("NudgeNotPending")));
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let h = Harness::new();
    let res = h.raw("POST", "/students/s1/heartbeat", Some("tok-s1"), "{\"kind\": ").await;
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    let (status, _) = h.call("POST", "/students/s1/heartbeat", "tok-s1", json!({ "kind": "IDE_ASSIGNMENT" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "IDE context without an assignment");
    let (status, _) = h.call("POST", "/students/s1/heartbeat", "tok-s2", json!({ "kind": "FORUM" })).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let res = h.raw("POST", "/students/s1/heartbeat", None, "{\"kind\":\"FORUM\"}").await;
    assert_eq!(res.status(), StatusCode::UNAUTHORIZED);
    let res = h.raw("POST", "/students/s1/heartbeat", Some("nope"), "{\"kind\":\"FORUM\"}").await;
    assert_eq!(res.status(), StatusCode::UNAUTHORIZED);
    let (status, _) = h.call("POST", "/tickets", "tok-s1", Value::Null).await;
    assert_eq!(status, StatusCode::FORBIDDEN, "students cannot open tickets");
    let (status, _) = h.call("GET", "/admin/stats", "tok-t1", Value::Null).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, body) = h.call("POST", "/students/s1/completions", "tok-s1", json!({ "assignment_id": "zz" })).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("UnknownAssignment")));
}

async fn matched(h: &Harness) -> u64 {
    let (_, nudge, _) = h.offer().await;
    let (_, body) =
        h.call("POST", &format!("/nudges/{nudge}/respond"), "tok-s1", json!({ "response": "ACCEPT" })).await;
    body["session"]["session_id"].as_u64().unwrap()
}

#[tokio::test]
async fn only_the_student_edits_code() {
    let h = Harness::new();
    let session = matched(&h).await;
    let path = format!("/sessions/{session}/events");
    let (status, body) = h.call("POST", &path, "tok-t1", json!({ "event": "CODE_EDIT", "payload": "x = 1" })).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::FORBIDDEN, Some("EditForbidden")));
    let (status, body) = h.call("POST", &path, "tok-s1", json!({ "event": "CODE_EDIT", "payload": "x = 2" })).await;
    assert_eq!((status, body["seq"].as_u64()), (StatusCode::CREATED, Some(1)));
    let (status, _) = h.call("POST", &path, "tok-t1", json!({ "event": "CODE_RUN" })).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = h.call("POST", &path, "tok-s2", json!({ "event": "CHAT", "payload": "hi" })).await;
    assert_eq!(status, StatusCode::FORBIDDEN, "outsider");

    let res = h.raw("GET", &format!("/sessions/{session}/transcript"), Some("tok-t1"), "").await;
    let text = String::from_utf8(res.into_body().collect().await.unwrap().to_bytes().to_vec()).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[tokio::test]
async fn offer_and_retract_reach_the_student() {
    let h = Harness::new();
    let mut student = h.stream("tok-s1", "").await;
    let mut teacher = h.stream("tok-t1", "").await;
    let (ticket, nudge, deadline) = h.offer().await;
    let (status, _) = h.call("POST", &format!("/tickets/{ticket}/cancel"), "tok-t1", Value::Null).await;
    assert_eq!(status, StatusCode::OK);

    let frames = student.all().await;
    let kinds: Vec<_> = frames.iter().map(|f| f.event.as_str()).collect();
    assert_eq!(kinds, ["offer", "retract"]);
    assert_eq!(frames[0].data["nudge_id"], nudge);
    assert_eq!(frames[0].data["deadline_ts"], deadline);
    assert_eq!(frames[0].data["teacher_id"], "t1");
    assert_eq!(frames[1].data["reason"], "CANCELLED");
    assert!(frames[0].id < frames[1].id);

    let states: Vec<_> = teacher.all().await.iter().map(|f| f.data["state"].as_str().unwrap().to_owned()).collect();
    assert_eq!(states, ["SEARCHING", "CANCELLED"]);
}

#[tokio::test]
async fn timed_out_offer_is_retracted_by_the_sweep() {
    let h = Harness::new();
    let (_, _, deadline) = h.offer().await;
    h.clock.set(Timestamp(deadline));
    h.app.tick().unwrap();
    let frames = h.stream("tok-s1", "").await.all().await;
    assert_eq!(frames.last().unwrap().event, "retract");
    assert_eq!(frames.last().unwrap().data["reason"], "TIMED_OUT");
    assert_eq!(frames.last().unwrap().data["ts"], deadline);
    let teacher = h.stream("tok-t1", "").await.all().await;
    assert_eq!(teacher.last().unwrap().data["state"], "EXHAUSTED");
}

#[tokio::test]
async fn stream_resumes_after_last_seq() {
    let h = Harness::new();
    let session = matched(&h).await;
    for i in 0..3 {
        let (status, _) = h
            .call(
                "POST",
                &format!("/sessions/{session}/events"),
                "tok-t1",
                json!({ "event": "CHAT", "payload": format!("m{i}") }),
            )
            .await;
        assert_eq!(status, StatusCode::CREATED);
    }
    let full = h.stream("tok-s1", "").await.all().await;
    let kinds: Vec<_> = full.iter().map(|f| f.event.as_str()).collect();
    assert_eq!(kinds, ["offer", "match", "session_event", "session_event", "session_event"]);
    assert!(full.windows(2).all(|w| w[0].id < w[1].id));

    let cut = full[2].id;
    let resumed = h.stream("tok-s1", &format!("&last_seq={cut}")).await.all().await;
    let ids: Vec<_> = resumed.iter().map(|f| f.id).collect();
    assert_eq!(ids, [full[3].id, full[4].id]);
    assert_eq!(resumed[0].data["payload"], "m1");

    let req = Request::builder()
        .uri("/stream")
        .header("authorization", "Bearer tok-s1")
        .header("last-event-id", cut.to_string())
        .body(Body::empty())
        .unwrap();
    let res = h.router.clone().oneshot(req).await.unwrap();
    let mut sse = Sse { body: res.into_body(), buf: String::new() };
    assert_eq!(sse.all().await.len(), 2);
}

#[tokio::test]
async fn live_stream_relays_between_participants() {
    let h = Harness::new();
    let session = matched(&h).await;
    let mut student = h.stream("tok-s1", "&last_seq=1000000").await;
    let (status, _) = h
        .call("POST", &format!("/sessions/{session}/events"), "tok-t1", json!({ "event": "CHAT", "payload": "hello" }))
        .await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, _) = h.call("POST", &format!("/sessions/{session}/end"), "tok-s1", Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    let frames = student.all().await;
    let kinds: Vec<_> = frames.iter().map(|f| f.event.as_str()).collect();
    assert!(kinds.is_empty(), "nothing above an out-of-range last_seq: {kinds:?}");

    let mut student = h.stream("tok-s1", "").await;
    let backlog = student.all().await;
    assert_eq!(backlog.last().unwrap().event, "session_ended");
    assert_eq!(backlog.last().unwrap().data["ended_by"], "STUDENT");
    assert_eq!(backlog[backlog.len() - 2].data["author"], "TEACHER");
}

#[tokio::test]
async fn gratitude_is_moderated_before_release() {
    let h = Harness::new();
    let session = matched(&h).await;
    let (status, body) =
        h.call("POST", &format!("/sessions/{session}/gratitude"), "tok-s1", json!({ "thanked": true })).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::CONFLICT, Some("SessionLive")));
    h.call("POST", &format!("/sessions/{session}/end"), "tok-t1", Value::Null).await;
    let (status, _) = h
        .call(
            "POST",
            &format!("/sessions/{session}/gratitude"),
            "tok-s1",
            json!({ "thanked": true, "message": "thank you!" }),
        )
        .await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) =
        h.call("POST", &format!("/sessions/{session}/gratitude"), "tok-t1", json!({ "thanked": true })).await;
    assert_eq!(status, StatusCode::FORBIDDEN, "teachers rate, students thank");
    let (status, body) = h.call("POST", &format!("/sessions/{session}/rating"), "tok-t1", json!({ "score": 6 })).await;
    assert_eq!((status, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("ScoreOutOfRange")));
    let (status, _) = h.call("POST", &format!("/sessions/{session}/rating"), "tok-t1", json!({ "score": 5 })).await;
    assert_eq!(status, StatusCode::OK);

    let (_, summary) = h.call("GET", "/teachers/t1/gratitude", "tok-t1", Value::Null).await;
    assert_eq!(summary, json!({ "thank_count": 1, "released_messages": [] }));
    let (status, _) =
        h.call("POST", &format!("/admin/sessions/{session}/release-gratitude"), "tok-t1", Value::Null).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, _) =
        h.call("POST", &format!("/admin/sessions/{session}/release-gratitude"), "admin", Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    let (_, summary) = h.call("GET", "/teachers/t1/gratitude", "tok-t1", Value::Null).await;
    assert_eq!(summary["released_messages"], json!(["thank you!"]));

    let frames = h.stream("tok-t1", "").await.all().await;
    assert_eq!(frames.last().unwrap().event, "gratitude_released");
    assert_eq!(frames.last().unwrap().data["message"], "thank you!");
}

#[tokio::test]
async fn admin_sees_stats_and_every_record() {
    let h = Harness::new();
    matched(&h).await;
    let (status, stats) = h.call("GET", "/admin/stats", "admin", Value::Null).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(stats["tickets"]["MATCHED"], 1);
    assert_eq!(stats["nudges"]["ACCEPTED"], 1);
    assert_eq!(stats["sessions"]["live"], 1);
    assert_eq!(stats["students_online"], 1);
    assert_eq!(stats["table1"]["tickets_accepted"], 1);
    let records = h.stream("admin", "").await.all().await;
    assert_eq!(records.len() as u64, stats["seq"].as_u64().unwrap());
    assert!(records.iter().all(|f| f.event == "record"));
    assert_eq!(records[0].data["kind"], "course_configured");

    let cfg = json!({ "assignment_ids": ["a0"], "experiment_fraction": 0.5 });
    let (status, body) = h.call("POST", "/admin/config", "admin", cfg).await;
    assert_eq!((status, &body["experiment_fraction"]), (StatusCode::OK, &json!(0.5)));
    let (status, _) = h.call("POST", "/admin/config", "admin", json!({ "experiment_fraction": 2.0 })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn log_is_written_before_the_reply_and_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.jsonl");
    let h = Harness::with_sink(Box::new(JsonlSink::append_to(&path).unwrap()), &[]);
    let (_, nudge, deadline) = h.offer().await;
    let on_disk = read_log_file(&path).unwrap();
    assert_eq!(on_disk.len() as u64, h.app.read(|s| s.seq()));
    let live = h.app.read(|s| s.hash());
    assert_eq!(replay(&on_disk).unwrap().hash(), live);
    drop(h);

    let h = Harness::with_sink(Box::new(JsonlSink::append_to(&path).unwrap()), &on_disk);
    assert_eq!(h.app.read(|s| s.hash()), live, "unchanged config adds no record");
    h.clock.set(Timestamp(deadline + 60_000));
    h.app.tick().unwrap();
    let n = h.app.read(|s| s.nudge(teachnow_core::NudgeId(nudge)).cloned().unwrap());
    assert_eq!(n.resolved_at, Some(Timestamp(deadline)));

    let frames = h.stream("tok-s1", "").await.all().await;
    let kinds: Vec<_> = frames.iter().map(|f| f.event.as_str()).collect();
    assert_eq!(kinds, ["offer", "retract"], "history survives restart");
    let records = read_log_file(&path).unwrap();
    assert_eq!(replay(&records).unwrap().hash(), h.app.read(|s| s.hash()));
}
