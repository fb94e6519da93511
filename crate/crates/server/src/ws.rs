//! WebSocket transport. One connection drives one session; the live run is
//! paced at one tick per `dt` of wall time.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::time::{interval, MissedTickBehavior};
use tracing::{debug, info, warn};

use crate::protocol::{ClientMessage, MapMessage, ServerMessage, SessionPhase};
use crate::session::{SessionError, SessionManager};

/// State messages per second.
pub const STATE_RATE_HZ: f64 = 20.0;

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/ws", get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(manager)
}

/// Binds `addr` and returns the bound address with the serving future.
pub async fn bind(
    manager: Arc<SessionManager>,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, impl std::future::Future<Output = std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    info!(%local, "listening");
    let app = router(manager);
    Ok((local, async move { axum::serve(listener, app).await }))
}

async fn upgrade(ws: WebSocketUpgrade, State(manager): State<Arc<SessionManager>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| async move {
        if let Err(e) = drive(socket, manager).await {
            warn!(error = %e, "connection closed with error");
        }
    })
}

fn encode(msg: &ServerMessage) -> Message {
    Message::Text(serde_json::to_string(msg).expect("message serializes").into())
}

async fn drive(socket: WebSocket, manager: Arc<SessionManager>) -> Result<(), SessionError> {
    let (mut tx, mut rx) = socket.split();
    let mut session: Option<String> = None;
    let dt = manager.dt();
    let mut ticker = interval(Duration::from_secs_f64(dt));
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let ticks_per_state = ((1.0 / STATE_RATE_HZ) / dt).round().max(1.0) as u64;
    let mut ticks: u64 = 0;

    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let msg: ClientMessage = match serde_json::from_str(&text) {
                    Ok(m) => m,
                    Err(e) => {
                        let _ = tx.send(encode(&ServerMessage::Error { message: e.to_string() })).await;
                        continue;
                    }
                };
                match (msg, &session) {
                    (ClientMessage::Hello { questionnaire, player_id }, None) => {
                        let id = manager.create_session(questionnaire, player_id.as_deref())?;
                        let group = manager.session(&id)?.lock().unwrap().group;
                        info!(session = %id, %group, "session created");
                        let welcome = ServerMessage::Welcome {
                            session_id: id.clone(),
                            group,
                            map: MapMessage::encode(manager.map()),
                        };
                        if tx.send(encode(&welcome)).await.is_err() {
                            session = Some(id);
                            break;
                        }
                        session = Some(id);
                    }
                    (ClientMessage::Start, Some(id)) => {
                        if let Err(e) = manager.start_live(id) {
                            let _ = tx.send(encode(&ServerMessage::Error { message: e.to_string() })).await;
                        } else {
                            ticks = 0;
                            ticker.reset();
                            if let Some(state) = manager.state(id)? {
                                let _ = tx.send(encode(&ServerMessage::State(state))).await;
                            }
                        }
                    }
                    (ClientMessage::Input(input), Some(id)) => match manager.apply_input(id, &input) {
                        Ok(()) => {}
                        Err(SessionError::StaleInput { seq, last }) => debug!(seq, last, "stale input dropped"),
                        Err(e) => debug!(error = %e, "input ignored"),
                    },
                    (ClientMessage::Bye, _) => break,
                    (other, _) => {
                        let message = format!("unexpected message {other:?}");
                        let _ = tx.send(encode(&ServerMessage::Error { message })).await;
                    }
                }
            }
            _ = ticker.tick(), if session.is_some() => {
                let id = session.as_ref().expect("guarded");
                if manager.phase(id)? == SessionPhase::Finished {
                    continue;
                }
                let (state, done) = manager.advance(id)?;
                ticks += 1;
                if done {
                    let record = manager.finalize_session(id)?;
                    if let Some(state) = state {
                        let _ = tx.send(encode(&ServerMessage::State(state))).await;
                    }
                    let end = ServerMessage::End {
                        outcome: record.outcome,
                        egress_time: record.player_egress_time,
                        group: record.group.expect("sessions carry a group"),
                    };
                    info!(session = %id, egress = ?record.player_egress_time, "session finished");
                    let _ = tx.send(encode(&end)).await;
                } else if ticks.is_multiple_of(ticks_per_state) {
                    if let Some(state) = state {
                        if tx.send(encode(&ServerMessage::State(state))).await.is_err() {
                            break;
                        }
                    }
                }
            }
        }
    }
    if let Some(id) = session {
        let record = manager.finalize_session(&id)?;
        debug!(session = %id, outcome = %record.outcome, "connection closed");
    }
    Ok(())
}
