//! `key=value` text reports and the per-player estimation CSV.

use std::fmt::Write as _;
use std::io::Write;

use cvqss_core::optimize::OptimizationResult;
use cvqss_core::postprocess::{Abort, RoundReport};
use cvqss_core::{KeyRateReport, ModulationPolicy, PlayerRate};

fn player_lines(s: &mut String, prefix: &str, r: &PlayerRate) {
    let j = r.honest;
    for (key, v) in [
        ("v_a", r.v_a),
        ("transmittance", r.transmittance),
        ("chi_line", r.chi_line),
        ("chi_het", r.chi_het),
        ("chi_tot", r.chi_tot),
        ("i_ab", r.mutual_information),
        ("chi_be", r.holevo),
        ("rate", r.rate),
    ] {
        writeln!(s, "{prefix}player.{j}.{key}={v}").unwrap();
    }
    let l = r.lambda.map(|x| x.to_string()).join(",");
    writeln!(s, "{prefix}player.{j}.lambda={l}").unwrap();
}

pub fn key_rate_report(r: &KeyRateReport) -> String {
    let mut s = String::new();
    match &r.modulation {
        ModulationPolicy::Shared(v) => writeln!(s, "v_a={v}").unwrap(),
        ModulationPolicy::PerPlayer(v) => {
            writeln!(s, "v_a={}", v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")).unwrap()
        }
    }
    writeln!(s, "players={}", r.per_player.len()).unwrap();
    writeln!(s, "rate={}", r.rate).unwrap();
    writeln!(s, "rate_clamped={}", r.clamped_rate()).unwrap();
    writeln!(s, "limiting_player={}", r.limiting_player).unwrap();
    for p in &r.per_player {
        player_lines(&mut s, "", p);
    }
    s
}

pub fn optimization_report(o: &OptimizationResult) -> String {
    format!(
        "optimizer.v_a={}\noptimizer.rate={}\noptimizer.evaluations={}\noptimizer.bracket={},{}\noptimizer.at_boundary={}\n",
        o.v_a, o.rate, o.evaluations, o.bracket.0, o.bracket.1, o.at_boundary
    )
}

pub fn round_report(r: &RoundReport) -> String {
    let mut s = String::new();
    let e = &r.estimation;
    writeln!(s, "estimation.samples={}", e.samples).unwrap();
    writeln!(s, "estimation.v_a_hat={}", e.v_a_hat).unwrap();
    writeln!(s, "estimation.epsilon_hat={}", e.epsilon_hat).unwrap();
    for t in &e.players {
        writeln!(s, "estimation.player.{}.t_hat={}", t.player, t.t_hat).unwrap();
        writeln!(s, "estimation.player.{}.t_std_err={}", t.player, t.std_err).unwrap();
    }
    for p in &r.players {
        let j = p.honest;
        writeln!(s, "round.player.{j}.samples={}", p.samples).unwrap();
        writeln!(s, "round.player.{j}.key_pulses={}", r.partition.key_material[j - 1].len()).unwrap();
        writeln!(s, "round.player.{j}.t_hat={}", p.t_hat).unwrap();
        writeln!(s, "round.player.{j}.xi_hat={}", p.xi_hat).unwrap();
        writeln!(s, "round.player.{j}.xi_std_err={}", p.xi_std_err).unwrap();
    }
    s.push_str(&key_rate_report(&r.report));
    match r.abort {
        Some(Abort::NoKey { player, rate }) => writeln!(s, "abort=no_key player={player} rate={rate}").unwrap(),
        None => writeln!(s, "abort=none").unwrap(),
    }
    s
}

pub const ESTIMATE_HEADER: [&str; 10] =
    ["player", "samples", "key_pulses", "v_a_hat", "t_hat", "t_std_err", "xi_hat", "xi_std_err", "i_ab", "rate"];

pub fn write_round_csv<W: Write>(r: &RoundReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ESTIMATE_HEADER)?;
    for p in &r.players {
        w.write_record([
            p.honest.to_string(),
            p.samples.to_string(),
            r.partition.key_material[p.honest - 1].len().to_string(),
            p.v_a_hat.to_string(),
            p.t_hat.to_string(),
            p.t_std_err.to_string(),
            p.xi_hat.to_string(),
            p.xi_std_err.to_string(),
            p.rate.mutual_information.to_string(),
            p.rate.rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
