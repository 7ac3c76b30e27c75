mod common;

use std::io::Cursor;
use std::path::Path;

use intervol::pipeline::*;
use intervol::sim::{simulate_ticks, TickSimSpec};
use proptest::prelude::*;

fn corpus(days: usize, seed: u64, spike_prob: f64, off_hours_share: f64) -> TickSeries {
    let spec = TickSimSpec { days, ticks_per_day: 3000, seed, spike_prob, off_hours_share, ..Default::default() };
    simulate_ticks(&spec).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cleaning_twice_changes_nothing(
        seed in any::<u64>(),
        spikes in 0.0f64..0.01,
        off in 0.0f64..0.1,
        median in any::<bool>(),
    ) {
        let cfg = CleaningConfig {
            center: if median { OutlierCenter::Median } else { OutlierCenter::Mean },
            ..Default::default()
        };
        let (once, _) = clean(&corpus(2, seed, spikes, off), &cfg);
        let (twice, report) = clean(&once, &cfg);
        prop_assert_eq!(&once.ticks, &twice.ticks);
        prop_assert_eq!(report.outliers + report.outside_hours + report.bad_price, 0);
    }

    #[test]
    fn changes_telescope_and_coarsen(seed in any::<u64>(), step in prop::sample::select(vec![5.0, 30.0, 60.0, 300.0])) {
        let (ticks, _) = clean(&corpus(2, seed, 0.002, 0.05), &CleaningConfig::default());
        let fine = last_tick_grid(&ticks, 1.0).unwrap();
        let coarse = last_tick_grid(&ticks, step).unwrap();
        let (series, _) = aggregate_last_tick(&ticks, step).unwrap();
        let every = (step * 1000.0) as i64;
        for (f, c) in fine.iter().zip(&coarse) {
            prop_assert_eq!(&f.day, &c.day);
            let (offs, prices): (Vec<i64>, Vec<i64>) =
                f.offsets_ms.iter().zip(&f.prices).filter(|(o, _)| *o % every == 0).map(|(o, p)| (*o, *p)).unzip();
            prop_assert_eq!(&offs, &c.offsets_ms);
            prop_assert_eq!(&prices, &c.prices);
        }
        for (s, g) in series.iter().zip(&coarse) {
            prop_assert_eq!(s.changes.iter().sum::<i64>(), g.prices.last().unwrap() - g.prices[0]);
        }
    }
}

#[test]
fn grid_sizes_match_the_session() {
    let ticks = corpus(1, 4, 0.0, 0.0);
    let g1 = last_tick_grid(&ticks, 1.0).unwrap();
    let g300 = last_tick_grid(&ticks, 300.0).unwrap();
    assert!(g1[0].prices.len() <= 23_400);
    assert_eq!(g300[0].prices.len(), 78);
    assert_eq!(SESSION_SECONDS, 23_400.0);
}

#[test]
fn spikes_and_off_hours_are_removed() {
    let raw = corpus(3, 8, 0.003, 0.05);
    let (cleaned, report) = clean(&raw, &CleaningConfig::default());
    assert!(report.outliers > 0);
    assert!(report.outside_hours > 0);
    assert_eq!(report.kept, cleaned.len());
    assert_eq!(report.input, report.kept + report.outliers + report.outside_hours + report.bad_price);
    // spikes double the price; none survive
    let (grid, _) = aggregate_last_tick(&cleaned, 1.0).unwrap();
    assert!(grid.iter().flat_map(|d| &d.changes).all(|c| c.abs() < 1000));
}

#[test]
fn ingest_reads_schema_columns_and_counts_problems() {
    let text = "time,px,size\n\
                2024-03-04T09:30:00.500,187.54,100\n\
                2024-03-04T09:30:01.250,,50\n\
                2024-03-04T09:30:02.000,187.55,10\n\
                garbage,1,1\n";
    let schema = Schema::parse_inline("timestamp=time,price=px").unwrap();
    let (ticks, report) = ingest_reader(Cursor::new(text), &schema, Path::new("mem.csv")).unwrap();
    assert_eq!(report.rows, 4);
    assert_eq!(report.kept, 2);
    assert_eq!(report.empty_price, 1);
    assert_eq!(report.malformed, 1);
    assert_eq!(ticks.ticks.iter().map(|t| t.price).collect::<Vec<_>>(), vec![18754, 18755]);
}

#[test]
fn change_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a = ChangeSeries::regular("2024-01-02", 1.0, vec![1, 0, -3]);
    let path = dir.path().join("changes.csv");
    let mut buf = Vec::new();
    write_changes_csv(&mut buf, std::slice::from_ref(&a)).unwrap();
    std::fs::write(&path, buf).unwrap();
    let back = read_changes_csv(&path).unwrap();
    assert_eq!(back, vec![a]);
}
