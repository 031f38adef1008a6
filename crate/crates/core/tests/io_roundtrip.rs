use boro_core::io::{read_dataset, write_dataset};
use boro_core::model::Dataset;
use boro_core::Error;
use proptest::prelude::*;

fn dataset() -> impl Strategy<Value = Dataset> {
    (1usize..4, 1usize..3, 1usize..20).prop_flat_map(|(d, k, n)| {
        let row = (
            prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), d),
            prop::collection::vec(-1e12f64..1e12, k),
        );
        prop::collection::vec(row, n).prop_map(|rows| {
            let (xs, ys) = rows.into_iter().unzip();
            Dataset::from_rows(xs, ys).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn written_datasets_read_back_identically(d in dataset()) {
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        let back = read_dataset(buf.as_slice()).unwrap();
        prop_assert_eq!(back, d);
    }
}

#[test]
fn errors_carry_line_numbers() {
    let cases = [
        ("x1,y1\n1,2\n", 1),
        ("# dims 1 1\nx1,y2\n1,2\n", 2),
        ("# dims 1 1\nx1,y1\n1,2\n\n5\n", 5),
        ("# dims 2 1\nx1,x2,y1\n1,2,3\n4,nan,6\n", 4),
    ];
    for (text, line) in cases {
        match read_dataset(text.as_bytes()) {
            Err(Error::Parse { line: got, .. }) => assert_eq!(got, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}
