mod common;

use common::{manager, office, settings, Pilot};
use evacsim_core::experiment::{aggregate_means, import_records, GroupLabel, Outcome};
use evacsim_server::protocol::{InputMessage, Questionnaire, SessionPhase};
use evacsim_server::session::count_violations;
use evacsim_server::{RecordLog, SessionError, SessionManager};
use glam::DVec2;

const YES_YES: Questionnaire = Questionnaire { frequent_gamer: true, building_knowledge: true };

fn input(seq: u64, d: DVec2) -> InputMessage {
    InputMessage { seq, direction: [d.x, d.y], timestamp: None }
}

/// Steers the player out, returning the number of ticks taken.
fn pilot_out(m: &SessionManager, id: &str, mut seq: u64) -> u64 {
    let pilot = Pilot::new(office());
    for tick in 1..4000 {
        let pos = m.state(id).unwrap().unwrap().player.position;
        seq += 1;
        m.apply_input(id, &input(seq, pilot.heading(pos))).unwrap();
        let (_, done) = m.advance(id).unwrap();
        if done {
            return tick;
        }
    }
    panic!("player never escaped");
}

#[test]
fn questionnaire_sets_group() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    assert_eq!(m.phase(&id).unwrap(), SessionPhase::Practice);
    m.start_live(&id).unwrap();
    pilot_out(&m, &id, 0);
    let record = m.finalize_session(&id).unwrap();
    assert_eq!(record.group, Some(GroupLabel::A));
    assert_eq!(record.outcome, Outcome::AllResolved);
    assert!(record.player_egress_time.unwrap() > 0.0);

    let d = m
        .create_session(Questionnaire { frequent_gamer: false, building_knowledge: false }, None)
        .unwrap();
    assert_eq!(m.finalize_session(&d).unwrap().group, Some(GroupLabel::D));
}

#[test]
fn practice_is_quiet_and_confined() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    for k in 0..200 {
        m.apply_input(&id, &input(k, DVec2::X)).unwrap();
        let (state, done) = m.advance(&id).unwrap();
        let state = state.unwrap();
        assert!(!done);
        assert!(!state.alarm_active);
        assert!(state.visible_fire_cells.is_empty());
        assert_eq!(state.elapsed_since_alarm, 0.0);
        // The start room spans x in [0.5, 2.5) m.
        assert!(state.player.position.x < 2.5, "left the start room at {}", state.player.position);
    }
}

#[test]
fn start_live_twice_is_wrong_phase() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    m.start_live(&id).unwrap();
    let first = m.state(&id).unwrap().unwrap();
    assert_eq!(first.elapsed_since_alarm, 0.0);
    assert!(first.alarm_active);
    assert!(matches!(m.start_live(&id), Err(SessionError::WrongPhase { .. })));
}

#[test]
fn inputs_steer_and_stale_ones_are_dropped() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    m.start_live(&id).unwrap();
    m.apply_input(&id, &input(5, DVec2::X)).unwrap();
    let mut last = m.state(&id).unwrap().unwrap().player.position.x;
    for _ in 0..10 {
        let s = m.advance(&id).unwrap().0.unwrap();
        assert!(s.player.position.x > last);
        last = s.player.position.x;
    }
    // An older seq asking to turn around is ignored.
    assert!(matches!(m.apply_input(&id, &input(4, DVec2::NEG_X)), Err(SessionError::StaleInput { .. })));
    let s = m.advance(&id).unwrap().0.unwrap();
    assert!(s.player.position.x > last);
    let stale = m.session(&id).unwrap().lock().unwrap().stale_inputs();
    assert_eq!(stale, 1);

    // Releasing the keys lets the driving term bleed the speed off; only
    // the weak pull of nearby walls remains.
    let moving = m.state(&id).unwrap().unwrap().player.velocity.length();
    m.apply_input(&id, &input(6, DVec2::ZERO)).unwrap();
    let mut speed = moving;
    for _ in 0..60 {
        speed = m.advance(&id).unwrap().0.unwrap().player.velocity.length();
    }
    assert!(speed < 0.1 * moving, "still moving at {speed} (was {moving})");
}

#[test]
fn same_seed_sessions_replay_the_same_crowd() {
    let m = manager(None);
    let a = m.create_session(YES_YES, None).unwrap();
    let b = m.create_session(YES_YES, None).unwrap();
    m.start_live(&a).unwrap();
    m.start_live(&b).unwrap();
    for _ in 0..100 {
        let sa = m.advance(&a).unwrap().0.unwrap();
        let sb = m.advance(&b).unwrap().0.unwrap();
        assert_eq!(sa.visible_agents, sb.visible_agents);
    }
    let npcs = |id: &str| {
        let s = m.session(id).unwrap();
        let g = s.lock().unwrap();
        g.simulation().snapshot().agents.iter().filter(|a| !a.is_player).cloned().collect::<Vec<_>>()
    };
    assert_eq!(npcs(&a), npcs(&b));
}

#[test]
fn disconnect_mid_run_is_aborted_and_frozen() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    m.start_live(&id).unwrap();
    for _ in 0..20 {
        m.advance(&id).unwrap();
    }
    let r1 = m.finalize_session(&id).unwrap();
    assert_eq!(r1.outcome, Outcome::Aborted);
    assert_eq!(r1.player_egress_time, None);
    let r2 = m.finalize_session(&id).unwrap();
    assert_eq!(r1, r2);
    assert!(matches!(m.finalize_session("nope"), Err(SessionError::UnknownSession(_))));
}

#[test]
fn escape_record_survives_later_disconnect() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sessions.csv");
    let m = SessionManager::new(settings(office()), Some(RecordLog::new(&path)));
    let id = m.create_session(YES_YES, Some("alice")).unwrap();
    m.start_live(&id).unwrap();
    let ticks = pilot_out(&m, &id, 0);
    let at_escape = m.session(&id).unwrap().lock().unwrap().record().cloned().unwrap();
    let later = m.finalize_session(&id).unwrap();
    assert_eq!(at_escape, later);
    assert_eq!(later.player_egress_time, Some(ticks as f64 / 20.0));

    // A second play by the same participant is flagged and both rows land in
    // the log once each.
    let again = m.create_session(Questionnaire { frequent_gamer: false, building_knowledge: true }, Some("alice")).unwrap();
    let r = m.finalize_session(&again).unwrap();
    assert!(r.repeat);
    m.finalize_session(&again).unwrap();

    let logged = import_records(&path).unwrap();
    assert_eq!(logged.len(), 2);
    assert_eq!(logged[0].player_egress_time, later.player_egress_time);
    let escaped: Vec<_> = logged.into_iter().filter(|r| r.player_egress_time.is_some()).collect();
    let means = aggregate_means(&escaped).unwrap();
    assert_eq!(means.get(&GroupLabel::A), later.player_egress_time.as_ref());
    assert!(dir.path().join(format!("sessions.{id}.json")).exists());
}

#[test]
fn state_messages_respect_fog_of_war() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    m.start_live(&id).unwrap();
    let pilot = Pilot::new(office());
    let mut seen_agents = 0;
    for seq in 1..2000 {
        let session = m.session(&id).unwrap();
        let pos = m.state(&id).unwrap().unwrap().player.position;
        m.apply_input(&id, &input(seq, pilot.heading(pos))).unwrap();
        let (state, done) = m.advance(&id).unwrap();
        let state = state.unwrap();
        let guard = session.lock().unwrap();
        assert_eq!(count_violations(guard.simulation(), &state), 0, "tick {}", state.tick);
        seen_agents += state.visible_agents.len();
        if done {
            break;
        }
    }
    assert!(seen_agents > 0);
}

#[test]
fn fog_check_flags_hidden_entities() {
    let m = manager(None);
    let id = m.create_session(YES_YES, None).unwrap();
    m.start_live(&id).unwrap();
    let session = m.session(&id).unwrap();
    let guard = session.lock().unwrap();
    let mut state = guard.state_message().unwrap();
    // An agent reported where it is not, and a fire that does not exist.
    let npc = guard.simulation().snapshot().agents.iter().find(|a| !a.is_player).unwrap().clone();
    state.visible_agents.push(evacsim_server::protocol::AgentView {
        id: npc.id,
        position: npc.position + DVec2::new(0.1, 0.0),
        velocity: npc.velocity,
        phase: npc.phase,
    });
    state.visible_fire_cells.push(evacsim_core::Cell::new(10, 4));
    assert_eq!(count_violations(guard.simulation(), &state), 2);
}
