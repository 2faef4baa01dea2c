#![no_main]

use lasso_phase::covariance::CovarianceModel;
use lasso_phase::io::parse_covariance_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_covariance_csv(text) {
        assert!(m.is_square() && m.nrows() > 0);
        assert!(m.iter().all(|v| v.is_finite()));
        // keep the factorization cheap
        if m.nrows() <= 16 {
            let _ = CovarianceModel::from_matrix(m);
        }
    }
});
