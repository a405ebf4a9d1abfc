use axum::extract::{FromRequestParts, Query};
use axum::http::request::Parts;
use axum::http::{header, StatusCode};
use serde::{Deserialize, Serialize};
use teachnow_core::{Participant, StudentId, TeacherId};

use crate::app::App;
use crate::error::ApiError;

/// Who a bearer token speaks for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Principal {
    Student { id: StudentId },
    Teacher { id: TeacherId },
    Admin,
}

impl Principal {
    pub fn participant(&self) -> Option<Participant> {
        match self {
            Principal::Student { id } => Some(Participant::Student(id.clone())),
            Principal::Teacher { id } => Some(Participant::Teacher(id.clone())),
            Principal::Admin => None,
        }
    }

    pub fn require_student(&self, id: &StudentId) -> Result<(), ApiError> {
        match self {
            Principal::Student { id: me } if me == id => Ok(()),
            _ => Err(ApiError::forbidden("token does not belong to this student")),
        }
    }

    pub fn require_teacher(&self, id: &TeacherId) -> Result<(), ApiError> {
        match self {
            Principal::Teacher { id: me } if me == id => Ok(()),
            _ => Err(ApiError::forbidden("token does not belong to this teacher")),
        }
    }

    pub fn require_admin(&self) -> Result<(), ApiError> {
        match self {
            Principal::Admin => Ok(()),
            _ => Err(ApiError::forbidden("admin token required")),
        }
    }
}

#[derive(Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

/// Authenticated caller. Accepts `Authorization: Bearer <token>`, or a
/// `token` query parameter for clients that cannot set headers.
pub struct Auth(pub Principal);

impl FromRequestParts<App> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, app: &App) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_owned);
        let token = match header {
            Some(t) => Some(t),
            None => Query::<TokenQuery>::try_from_uri(&parts.uri).ok().and_then(|q| q.0.token),
        };
        let token = token.ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing token"))?;
        app.principal(&token)
            .map(Auth)
            .ok_or_else(|| ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "unknown token"))
    }
}
