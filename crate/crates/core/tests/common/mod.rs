//! Random statement tables for property tests.
#![allow(dead_code)]

use credit_stack::ingest::{self, ColumnKind, ColumnSchema, StatementTable, Storage};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One statement: two continuous cells and one categorical cell.
pub type Row = (Option<f64>, Option<f64>, Option<u32>);

pub fn schema() -> Vec<ColumnSchema> {
    vec![
        ColumnSchema::new("customer_ID", ColumnKind::Identifier, Storage::Float32),
        ColumnSchema::new("S_2", ColumnKind::Date, Storage::Float32),
        ColumnSchema::new("a", ColumnKind::Continuous, Storage::Float32).with_range(-50.0, 50.0),
        ColumnSchema::new("b", ColumnKind::Continuous, Storage::Float32),
        ColumnSchema::new("k", ColumnKind::Categorical, Storage::Int8),
    ]
}

fn cell() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![
        1 => Just(None),
        1 => Just(Some(999.0)),
        8 => (-60.0f64..60.0).prop_map(Some),
    ]
}

fn statement() -> impl Strategy<Value = Row> {
    (cell(), cell(), proptest::option::weighted(0.8, 0u32..6))
}

/// Customers in date order, 1..=13 statements each.
pub fn customers(max: usize) -> impl Strategy<Value = Vec<Vec<Row>>> {
    proptest::collection::vec(proptest::collection::vec(statement(), 1..=13), 1..=max)
}

fn date(t: usize) -> String {
    let (year, month) = if t < 12 { (2017, t + 1) } else { (2018, 1) };
    format!("{year}-{month:02}-15")
}

/// CSV text with each customer's rows shuffled by `shuffle_seed`.
pub fn csv(customers: &[Vec<Row>], shuffle_seed: Option<u64>) -> String {
    let mut rng = shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut out = String::from("customer_ID,S_2,a,b,k\n");
    let fmt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for (c, rows) in customers.iter().enumerate() {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        for t in order {
            let (a, b, k) = rows[t];
            out.push_str(&format!(
                "c{c:03},{},{},{},{}\n",
                date(t),
                fmt(a),
                fmt(b),
                k.map_or(String::new(), |k| k.to_string())
            ));
        }
    }
    out
}

pub fn table(customers: &[Vec<Row>], shuffle_seed: Option<u64>) -> StatementTable {
    ingest::parse_reader(csv(customers, shuffle_seed).as_bytes(), &schema()).unwrap()
}
