mod common;

use std::sync::Arc;
use std::time::Instant;

use common::{office, settings, Pilot};
use evacsim_core::experiment::{import_records, GroupLabel, Outcome};
use evacsim_server::protocol::{ClientMessage, InputMessage, Questionnaire, ServerMessage, SessionPhase};
use evacsim_server::{ws, RecordLog, SessionManager};
use futures::{SinkExt, StreamExt};
use tokio_tungstenite::connect_async;
use tokio_tungstenite::tungstenite::Message;

fn text(msg: &ClientMessage) -> Message {
    Message::text(serde_json::to_string(msg).unwrap())
}

fn parse(msg: Message) -> ServerMessage {
    serde_json::from_str(msg.to_text().unwrap()).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_client_escapes_in_real_time() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("sessions.csv");
    let manager = Arc::new(SessionManager::new(settings(office()), Some(RecordLog::new(&log_path))));
    let (addr, server) = ws::bind(manager.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    tokio::spawn(server);

    let (mut socket, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let hello = ClientMessage::Hello {
        questionnaire: Questionnaire { frequent_gamer: true, building_knowledge: true },
        player_id: None,
    };
    socket.send(text(&hello)).await.unwrap();
    let ServerMessage::Welcome { session_id, group, map } = parse(socket.next().await.unwrap().unwrap()) else {
        panic!("expected welcome");
    };
    assert_eq!(group, GroupLabel::A);
    assert_eq!(map.decode().len(), office().len());

    // A few practice frames: no alarm, no clock.
    for _ in 0..5 {
        let ServerMessage::State(s) = parse(socket.next().await.unwrap().unwrap()) else {
            panic!("expected state");
        };
        assert_eq!(s.phase, SessionPhase::Practice);
        assert!(!s.alarm_active);
    }

    socket.send(text(&ClientMessage::Start)).await.unwrap();
    let pilot = Pilot::new(office());
    let mut seq = 0;
    let mut live_start: Option<(u64, Instant)> = None;
    let mut last_live = None;
    let (outcome, egress) = loop {
        match parse(socket.next().await.unwrap().unwrap()) {
            ServerMessage::State(s) if s.phase == SessionPhase::Live => {
                if live_start.is_none() {
                    assert_eq!(s.elapsed_since_alarm, 0.0);
                    live_start = Some((s.tick, Instant::now()));
                }
                last_live = Some((s.tick, Instant::now()));
                seq += 1;
                let h = pilot.heading(s.player.position);
                let input = ClientMessage::Input(InputMessage { seq, direction: [h.x, h.y], timestamp: None });
                socket.send(text(&input)).await.unwrap();
            }
            ServerMessage::State(_) => {}
            ServerMessage::End { outcome, egress_time, group } => {
                assert_eq!(group, GroupLabel::A);
                break (outcome, egress_time);
            }
            other => panic!("unexpected {other:?}"),
        }
    };
    assert_eq!(outcome, Outcome::AllResolved);
    let egress = egress.expect("player escaped");

    // Wall-clock pacing: one tick per 50 ms within 10%.
    let ((t0, w0), (t1, w1)) = (live_start.unwrap(), last_live.unwrap());
    let rate = (t1 - t0) as f64 / (w1 - w0).as_secs_f64();
    assert!((rate - 20.0).abs() <= 2.0, "tick rate {rate}/s");

    socket.send(text(&ClientMessage::Bye)).await.unwrap();
    let record = manager.finalize_session(&session_id).unwrap();
    assert_eq!(record.player_egress_time, Some(egress));
    let logged = import_records(&log_path).unwrap();
    assert_eq!(logged.len(), 1);
    assert_eq!(logged[0].player_egress_time, Some(egress));
    assert_eq!(logged[0].group, Some(GroupLabel::A));
}

#[tokio::test]
async fn disconnect_during_live_is_aborted() {
    let manager = Arc::new(SessionManager::new(settings(office()), None));
    let (addr, server) = ws::bind(manager.clone(), "127.0.0.1:0".parse().unwrap()).await.unwrap();
    tokio::spawn(server);
    let (mut socket, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
    let hello = ClientMessage::Hello {
        questionnaire: Questionnaire { frequent_gamer: false, building_knowledge: false },
        player_id: None,
    };
    socket.send(text(&hello)).await.unwrap();
    let ServerMessage::Welcome { session_id, .. } = parse(socket.next().await.unwrap().unwrap()) else {
        panic!("expected welcome");
    };
    socket.send(text(&ClientMessage::Start)).await.unwrap();
    for _ in 0..3 {
        socket.next().await.unwrap().unwrap();
    }
    drop(socket);
    for _ in 0..100 {
        if manager.phase(&session_id).unwrap() == SessionPhase::Finished {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    let record = manager.finalize_session(&session_id).unwrap();
    assert_eq!(record.outcome, Outcome::Aborted);
    assert_eq!(record.player_egress_time, None);
    assert_eq!(record.group, Some(GroupLabel::D));
}
