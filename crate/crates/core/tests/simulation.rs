use compchall::attacksim::{
    simulate_legit_user, simulate_online_attack, AttemptResult, LoginEvent, SimSetup,
};
use compchall::protocol::{PuzzleParams, Variant};
use compchall::userstore::{UserRecord, UserStore};

fn target(variant: Variant) -> UserRecord {
    UserStore::default().enroll("victim", "s3cret!", variant, 1000).unwrap()
}

fn wrong_guesses(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("guess{i:04}")).collect()
}

#[test]
fn throttling_law_over_twenty_runs() {
    let dict = wrong_guesses(100);
    let mut evals = 0u64;
    let mut solves = 0u64;
    for seed in 0..20 {
        let setup = SimSetup::new(PuzzleParams::new(12).unwrap(), seed);
        let report = simulate_online_attack(&dict, &target(Variant::Base), &setup).unwrap();
        assert_eq!(report.attempts, 100);
        assert_eq!(report.puzzle_solves, 100);
        assert_eq!(report.challenges_issued, 100);
        assert_eq!(report.free_guesses, 0);
        assert!(!report.success);
        assert!(report.total_hash_evals >= report.attempts);
        assert_eq!(report.virtual_elapsed, report.total_hash_evals as f64 * setup.t_per_hash);
        evals += report.total_hash_evals;
        solves += report.puzzle_solves;
    }
    let mean = evals as f64 / solves as f64;
    assert!((0.85..=1.15).contains(&(mean / 2048.0)), "mean {mean}");
}

#[test]
fn every_variant_resists_reuse() {
    for variant in Variant::ALL {
        let setup = SimSetup::new(PuzzleParams::new(8).unwrap(), 5);
        let report = simulate_online_attack(&wrong_guesses(30), &target(variant), &setup).unwrap();
        assert_eq!(report.free_guesses, 0, "{variant}");
        assert_eq!(report.attempts, 30);
        match variant {
            // Guesses are rejected locally against one challenge, each at full cost.
            Variant::OfflineResistant => {
                assert_eq!(report.challenges_issued, 1);
                assert!(report.rows.iter().all(|r| r.result == AttemptResult::Rejected && r.solve_evals == 256));
            }
            _ => assert_eq!(report.challenges_issued, 30),
        }
    }
}

#[test]
fn hit_at_the_end_of_the_dictionary() {
    let mut dict = wrong_guesses(9);
    dict.push("s3cret!".into());
    dict.push("never-tried".into());
    for variant in Variant::ALL {
        let setup = SimSetup::new(PuzzleParams::new(6).unwrap(), 1);
        let report = simulate_online_attack(&dict, &target(variant), &setup).unwrap();
        assert!(report.success, "{variant}");
        assert_eq!(report.attempts, 10);
        assert_eq!(report.rows.last().unwrap().result, AttemptResult::Success);
    }
}

#[test]
fn legitimate_user_costs() {
    use LoginEvent::{Correct, Wrong};
    let setup = SimSetup::new(PuzzleParams::new(8).unwrap(), 2);
    let ten = [Correct; 10];
    let base = simulate_legit_user(&ten, &target(Variant::Base), "s3cret!", &setup).unwrap();
    assert_eq!(base.puzzle_solves, 1);
    assert!(base.rows.iter().all(|r| r.result == AttemptResult::Success));

    let offline = simulate_legit_user(&ten, &target(Variant::OfflineResistant), "s3cret!", &setup).unwrap();
    assert_eq!(offline.puzzle_solves, 1);

    let lamport = simulate_legit_user(&ten, &target(Variant::Lamport), "s3cret!", &setup).unwrap();
    assert_eq!(lamport.puzzle_solves, 10);

    let typo = simulate_legit_user(&[Correct, Wrong, Correct], &target(Variant::Base), "s3cret!", &setup).unwrap();
    assert_eq!(typo.puzzle_solves, 2);
    assert_eq!(
        typo.rows.iter().map(|r| r.result).collect::<Vec<_>>(),
        [AttemptResult::Success, AttemptResult::Fail, AttemptResult::Success]
    );
}
