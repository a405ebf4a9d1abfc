use std::collections::BTreeMap;

use axum::body::Bytes;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use teachnow_core::analytics::Table1Aggregates;
use teachnow_core::session::{GratitudeSummary, MediaPrefs};
use teachnow_core::{
    ActivityContext, AssignmentId, CourseConfig, NudgeId, NudgeTicket, Response, SelectionPolicy, Session,
    SessionEventKind, SessionId, StudentId, TeacherId, TicketId,
};

use crate::app::App;
use crate::auth::{Auth, Principal};
use crate::error::ApiError;
use crate::stream;

pub fn router(app: App) -> Router {
    Router::new()
        .route("/students/{id}/heartbeat", post(student_heartbeat))
        .route("/students/{id}/completions", post(completion))
        .route("/teachers/{id}/heartbeat", post(teacher_heartbeat))
        .route("/teachers/{id}/gratitude", get(gratitude_summary))
        .route("/tickets", post(open_ticket))
        .route("/tickets/{id}", get(get_ticket))
        .route("/tickets/{id}/cancel", post(cancel_ticket))
        .route("/nudges/{id}/respond", post(respond))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/events", post(session_event))
        .route("/sessions/{id}/media", post(media))
        .route("/sessions/{id}/end", post(end_session))
        .route("/sessions/{id}/gratitude", post(gratitude))
        .route("/sessions/{id}/rating", post(rating))
        .route("/admin/stats", get(stats))
        .route("/admin/config", post(configure))
        .route("/admin/sessions/{id}/release-gratitude", post(release_gratitude))
        .route("/stream", get(stream::stream))
        .with_state(app)
}

/// JSON request body. Anything unparsable is a 400; an empty body reads as `{}`.
pub(crate) struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::bad_request(e.body_text()))?;
        let text: &[u8] = if bytes.trim_ascii().is_empty() { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(JsonBody).map_err(|e| ApiError::bad_request(format!("malformed JSON: {e}")))
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn student_heartbeat(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<String>,
    JsonBody(context): JsonBody<ActivityContext>,
) -> ApiResult<Value> {
    let id = StudentId(id);
    who.require_student(&id)?;
    let rec = app.execute(|e, now| e.record_heartbeat(id, now, context))?;
    Ok(Json(json!(rec)))
}

async fn teacher_heartbeat(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<String>,
    JsonBody(context): JsonBody<ActivityContext>,
) -> ApiResult<Value> {
    let id = TeacherId(id);
    who.require_teacher(&id)?;
    let rec = app.execute(|e, now| e.record_teacher_heartbeat(id, now, context))?;
    Ok(Json(json!(rec)))
}

#[derive(Deserialize)]
struct Completion {
    assignment_id: AssignmentId,
}

async fn completion(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<String>,
    JsonBody(body): JsonBody<Completion>,
) -> ApiResult<Value> {
    let id = StudentId(id);
    who.require_student(&id)?;
    let newly = app.execute(|e, now| e.record_completion(id, body.assignment_id, now))?;
    Ok(Json(json!({ "newly_completed": newly })))
}

fn teacher_of(who: &Principal) -> Result<TeacherId, ApiError> {
    match who {
        Principal::Teacher { id } => Ok(id.clone()),
        _ => Err(ApiError::forbidden("teacher token required")),
    }
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct OpenTicket {
    policy: SelectionPolicy,
}

async fn open_ticket(
    State(app): State<App>,
    Auth(who): Auth,
    JsonBody(body): JsonBody<OpenTicket>,
) -> Result<impl IntoResponse, ApiError> {
    let teacher = teacher_of(&who)?;
    let ticket = app.execute(|e, now| e.initiate_ticket(teacher, now, body.policy))?;
    Ok((StatusCode::CREATED, Json(ticket)))
}

fn ticket_visible(app: &App, who: &Principal, id: TicketId) -> Result<NudgeTicket, ApiError> {
    let ticket = app.read(|s| s.ticket(id).cloned()).ok_or(teachnow_core::CoreError::TicketNotFound(id))?;
    match who {
        Principal::Admin => Ok(ticket),
        Principal::Teacher { id } if *id == ticket.teacher_id => Ok(ticket),
        _ => Err(ApiError::forbidden("not your ticket")),
    }
}

async fn get_ticket(State(app): State<App>, Auth(who): Auth, Path(id): Path<u64>) -> ApiResult<NudgeTicket> {
    Ok(Json(ticket_visible(&app, &who, TicketId(id))?))
}

async fn cancel_ticket(State(app): State<App>, Auth(who): Auth, Path(id): Path<u64>) -> ApiResult<NudgeTicket> {
    let id = TicketId(id);
    if matches!(who, Principal::Admin) {
        return Err(ApiError::forbidden("only the ticket's teacher may cancel it"));
    }
    ticket_visible(&app, &who, id)?;
    Ok(Json(app.execute(|e, now| e.cancel_ticket(id, now))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Respond {
    response: Response,
}

async fn respond(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
    JsonBody(body): JsonBody<Respond>,
) -> ApiResult<Value> {
    let id = NudgeId(id);
    let owner = app.read(|s| s.nudge(id).map(|n| n.student_id.clone()));
    let owner = owner.ok_or(teachnow_core::CoreError::NudgeNotFound(id))?;
    who.require_student(&owner)?;
    let ticket = app.execute(|e, now| e.respond_nudge(id, body.response, now))?;
    let session = app.read(|s| s.session_for_ticket(ticket.ticket_id).cloned());
    Ok(Json(json!({ "ticket": ticket, "session": session })))
}

fn session_visible(app: &App, who: &Principal, id: SessionId) -> Result<Session, ApiError> {
    let session = app.read(|s| s.session(id).cloned()).ok_or(teachnow_core::CoreError::SessionNotFound(id))?;
    let allowed = match who {
        Principal::Admin => true,
        Principal::Teacher { id } => *id == session.teacher_id,
        Principal::Student { id } => *id == session.student_id,
    };
    if allowed {
        Ok(session)
    } else {
        Err(teachnow_core::CoreError::NotParticipant(id).into())
    }
}

async fn get_session(State(app): State<App>, Auth(who): Auth, Path(id): Path<u64>) -> ApiResult<Session> {
    Ok(Json(session_visible(&app, &who, SessionId(id))?))
}

async fn transcript(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
) -> Result<impl IntoResponse, ApiError> {
    let session = session_visible(&app, &who, SessionId(id))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], session.transcript_jsonl()))
}

fn participant(who: &Principal) -> Result<teachnow_core::Participant, ApiError> {
    who.participant().ok_or_else(|| ApiError::forbidden("admins are not session participants"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppendEvent {
    event: SessionEventKind,
    #[serde(default)]
    payload: String,
}

async fn session_event(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
    JsonBody(body): JsonBody<AppendEvent>,
) -> Result<impl IntoResponse, ApiError> {
    let p = participant(&who)?;
    let seq = app.execute(|e, now| e.append_session_event(SessionId(id), &p, body.event, body.payload, now))?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id, "seq": seq }))))
}

async fn media(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
    JsonBody(prefs): JsonBody<MediaPrefs>,
) -> ApiResult<Session> {
    let p = participant(&who)?;
    Ok(Json(app.execute(|e, now| e.set_media_prefs(SessionId(id), &p, prefs, now))?))
}

async fn end_session(State(app): State<App>, Auth(who): Auth, Path(id): Path<u64>) -> ApiResult<Session> {
    let p = participant(&who)?;
    Ok(Json(app.execute(|e, now| e.end_session(SessionId(id), now, &p))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Gratitude {
    thanked: bool,
    #[serde(default)]
    message: Option<String>,
}

async fn gratitude(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
    JsonBody(body): JsonBody<Gratitude>,
) -> ApiResult<Session> {
    let id = SessionId(id);
    let session = session_visible(&app, &who, id)?;
    who.require_student(&session.student_id)?;
    Ok(Json(app.execute(|e, now| e.record_gratitude(id, body.thanked, body.message, now))?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Rating {
    score: u8,
    #[serde(default)]
    comment: Option<String>,
}

async fn rating(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<u64>,
    JsonBody(body): JsonBody<Rating>,
) -> ApiResult<Session> {
    let id = SessionId(id);
    let session = session_visible(&app, &who, id)?;
    who.require_teacher(&session.teacher_id)?;
    Ok(Json(app.execute(|e, now| e.record_rating(id, body.score, body.comment, now))?))
}

async fn gratitude_summary(
    State(app): State<App>,
    Auth(who): Auth,
    Path(id): Path<String>,
) -> ApiResult<GratitudeSummary> {
    let id = TeacherId(id);
    if who != Principal::Admin {
        who.require_teacher(&id)?;
    }
    Ok(Json(app.read(|s| s.teacher_gratitude_summary(&id))))
}

async fn release_gratitude(State(app): State<App>, Auth(who): Auth, Path(id): Path<u64>) -> ApiResult<Session> {
    who.require_admin()?;
    Ok(Json(app.execute(|e, now| e.release_gratitude(SessionId(id), now))?))
}

async fn configure(
    State(app): State<App>,
    Auth(who): Auth,
    JsonBody(config): JsonBody<CourseConfig>,
) -> ApiResult<CourseConfig> {
    who.require_admin()?;
    app.execute(|e, now| e.configure(config, now))?;
    Ok(Json(app.read(|s| s.config().clone())))
}

async fn stats(State(app): State<App>, Auth(who): Auth) -> ApiResult<Value> {
    who.require_admin()?;
    let now = app.now();
    Ok(Json(app.read(|s| {
        let window = s.config().online_window_ms;
        let name = |v: Value| v.get("state").cloned().unwrap_or(v).as_str().unwrap_or_default().to_owned();
        let mut tickets: BTreeMap<String, usize> = BTreeMap::new();
        for t in s.tickets() {
            *tickets.entry(name(json!(t.state))).or_default() += 1;
        }
        let mut nudges: BTreeMap<String, usize> = BTreeMap::new();
        for n in s.nudges() {
            *nudges.entry(name(json!(n.outcome))).or_default() += 1;
        }
        let live = s.sessions().filter(|x| x.is_live()).count();
        json!({
            "seq": s.seq(),
            "clock": s.clock(),
            "state_hash": s.hash(),
            "students_online": s.students().iter().filter(|(_, ts, _)| now.since(*ts) <= window).count(),
            "teachers_online": s.teachers().iter().filter(|(_, ts, _)| now.since(*ts) <= window).count(),
            "tickets": tickets,
            "nudges": nudges,
            "sessions": { "live": live, "ended": s.sessions().count() - live },
            "table1": Table1Aggregates::<f64>::from_state(s),
        })
    })))
}
