//! Every cargo example also runs as a test.

#[path = "../examples/field_arithmetic.rs"]
mod field_arithmetic;

#[path = "../examples/shamir_threshold.rs"]
mod shamir_threshold;

#[path = "../examples/ballot_encoding.rs"]
mod ballot_encoding;

#[path = "../examples/center_journal.rs"]
mod center_journal;

#[path = "../examples/worked_election.rs"]
mod worked_election;

#[path = "../examples/loopback_election.rs"]
mod loopback_election;

#[path = "../examples/cli_walkthrough.rs"]
mod cli_walkthrough;

macro_rules! example {
    ($name:ident) => {
        #[test]
        fn $name() {
            $name::run_example().unwrap();
        }
    };
}

example!(field_arithmetic);
example!(shamir_threshold);
example!(ballot_encoding);
example!(center_journal);
example!(worked_election);
example!(loopback_election);
example!(cli_walkthrough);
