//! Reference values computed with scipy 1.15 and frozen here.
#![allow(clippy::approx_constant)]

pub const NORMAL_CDF_TABLE: [(f64, f64); 11] = [
    (-8.0, 6.22096057427174e-16),
    (-5.5, 1.898956246588768e-08),
    (-3.0, 0.0013498980316300933),
    (-1.96, 0.024997895148220435),
    (-1.0, 0.15865525393145707),
    (-0.3, 0.3820885778110474),
    (0.0, 0.5),
    (0.5, 0.6914624612740131),
    (1.2, 0.8849303297782918),
    (2.5, 0.9937903346742238),
    (6.0, 0.9999999990134123),
];

pub const CHI2_SF_TABLE: [(f64, f64, f64); 13] = [
    (0.0, 1.0, 1.0),
    (0.5, 1.0, 0.47950012218695337),
    (3.84, 1.0, 0.05004352124870519),
    (1.0, 2.0, 0.6065306597126334),
    (5.99, 2.0, 0.05003662708658629),
    (7.2, 2.0, 0.027323722447292555),
    (2.5, 3.0, 0.4752910833430205),
    (11.3, 3.0, 0.010209496433133654),
    (20.0, 10.0, 0.029252688076961124),
    (0.1, 4.0, 0.9987908957257497),
    (30.0, 5.0, 1.4748581038443073e-05),
    (150.0, 100.0, 0.0009039320423540184),
    (42.0, 7.0, 5.199964130736562e-07),
];

pub const SHAPIRO_TABLE: [(&[f64], f64, f64); 10] = [
    (&[1.0, 2.0, 4.0], 0.9642857142857142, 0.6368868450289689),
    (
        &[2.1, 3.4, 1.9, 5.6, 4.4],
        0.9320849391953863,
        0.6106559022604845,
    ),
    (
        &[1.029, 1.642, 1.147, -0.973, -1.393, 0.067, 0.861, 0.509],
        0.9172956724151787,
        0.40830663825208946,
    ),
    (
        &[
            13.621, 11.502, 11.28, 8.537, 7.785, 12.969, 10.098, 11.623, 7.247, 9.127, 7.418, 8.449,
        ],
        0.9269737448918143,
        0.3491366254965793,
    ),
    (
        &[
            0.07, 3.073, 1.635, 1.114, 0.286, 0.272, 3.499, 0.406, 0.396, 0.121, 0.994, 0.144,
            0.809, 0.223, 1.769,
        ],
        0.7974287113126977,
        0.0034079794163716847,
    ),
    (
        &[
            0.965, 0.898, 0.079, 0.245, 0.185, 0.905, 0.554, 0.372, 0.834, 0.349, 0.682, 0.228,
            0.024, 0.696, 0.337, 0.342, 0.276, 0.251, 0.57, 0.334,
        ],
        0.9214712046347815,
        0.10576401864518642,
    ),
    (
        &[
            0.71, -0.866, -0.054, 0.603, -0.212, -0.61, -0.765, -0.632, -0.672, -0.451, 1.146,
            -0.801, 0.887, 0.418, 0.14, -0.827, -0.457, 1.974, 0.099, 0.538, 0.663, 1.056, -0.238,
            -0.61, -0.06, -0.261, 0.791, 0.19, 0.239, 0.145,
        ],
        0.9454842782684125,
        0.1278375268039716,
    ),
    (
        &[
            2.672, 0.648, 0.682, 2.03, 0.918, 1.335, 0.558, 1.019, 1.413, 0.346, 0.574, 1.403,
            6.044, 1.447, 0.954, 0.509, 1.368, 0.135, 0.961, 0.768, 0.66, 6.4, 0.138, 0.982, 1.057,
            1.453, 0.278, 0.688, 0.302, 0.903, 1.17, 1.141, 0.854, 1.16, 1.152, 1.383, 1.02, 0.24,
            0.521, 1.318,
        ],
        0.5923660827126308,
        2.4648881493020978e-09,
    ),
    (
        &[
            -0.091, -0.08, 0.011, -0.005, 0.089, 0.051, -0.044, 0.011, -0.286, -0.08, -0.015,
            -0.239, -0.032, 0.025, 0.103, 0.04, 0.188, 0.153, -0.163, -0.023, -0.016, 0.009,
            -0.057, 0.061, 0.075, 2.848, 3.095, 2.935, 3.106, 3.056, 2.987, 3.199, 3.089, 3.003,
            3.025, 3.242, 3.142, 3.095, 3.022, 3.056, 3.015, 2.847, 3.089, 3.041, 2.865, 2.936,
            2.975, 3.033, 3.173, 3.002,
        ],
        0.6976316584822124,
        7.50639504620181e-09,
    ),
    (
        &[
            -1.673, -1.674, 0.779, 0.623, 3.859, -2.645, -2.092, -3.335, -0.039, -0.159, -0.151,
            -0.095, -1.136, 1.707, -0.555, -0.264, 1.138, 0.506, 0.52, -3.11, 0.515, 0.813, 0.052,
            -0.315, -0.948, -0.61, 1.087, -1.257, 0.465, 1.456, -0.692, -0.264, 2.549, 0.088,
            0.847, -1.524, 0.134, -0.55, 0.624, 0.631, 0.932, 0.951, -0.012, 0.054, 0.584, 0.113,
            -0.868, 0.595, -0.367, 0.597, -2.216, 5.599, 0.95, -1.039, -1.179, 0.985, -0.542,
            -1.043, -1.383, -1.672, -0.253, 0.032, 0.533, -5.366, 1.659, 2.797, -0.318, 1.807,
            0.191, -0.168, 3.081, -1.318, -0.491, -0.084, -1.279, -0.297, 0.467, 1.794, 1.074,
            1.194, -0.578, 1.019, 3.037, -2.629, -0.092, -1.44, 1.756, 1.145, -0.559, -0.295,
            -6.834, 1.781, 2.098, -1.274, 0.476, -1.452, 0.023, -0.601, 1.147, 1.565, 1.615, -0.42,
            2.222, 1.37, -0.028, 0.632, 0.164, -0.616, 0.117, 2.405, 0.252, -0.24, 0.275, 0.345,
            0.717, -1.755, 1.502, 1.412, 0.963, -0.721,
        ],
        0.9423337744333631,
        6.17095432381465e-05,
    ),
];

/// Four groups of 110 deterministic values with ties.
pub fn dunn_fixture() -> Vec<Vec<f64>> {
    (0..4)
        .map(|g| {
            (0..110)
                .map(|i| ((i * 37 + g * 11 + (i * i) % 7) % 53) as f64 * 0.25 + g as f64 * 1.5)
                .collect()
        })
        .collect()
}

pub const DUNN_TABLE: [(usize, usize, f64, f64); 6] = [
    (0, 1, -3.0086081977231625, 0.0026244733203487237),
    (0, 2, -5.517681906637793, 3.435004538293341e-08),
    (0, 3, -7.931833456851011, 2.159338927880801e-15),
    (1, 2, -2.50907370891463, 0.012104822281932789),
    (1, 3, -4.9232252591278485, 8.512936446901064e-07),
    (2, 3, -2.414151550213219, 0.015771900693597168),
];

pub const DUNN_KW: (f64, f64) = (69.38612221687201, 5.776974514982978e-15);

/// dCor through the S1 + S2 - 2 S3 expansion of the squared distance
/// covariance, independent of the double-centring used in the library.
pub fn dcor_oracle(x: &[f64], y: &[f64]) -> f64 {
    fn dcov2(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mut s1 = 0.0;
        let mut s2a = 0.0;
        let mut s2b = 0.0;
        let mut s3 = 0.0;
        for i in 0..x.len() {
            let mut ri = 0.0;
            let mut rj = 0.0;
            for j in 0..x.len() {
                let a = (x[i] - x[j]).abs();
                let b = (y[i] - y[j]).abs();
                s1 += a * b;
                s2a += a;
                s2b += b;
                ri += a;
                rj += b;
            }
            s3 += ri * rj;
        }
        s1 / (n * n) + (s2a / (n * n)) * (s2b / (n * n)) - 2.0 * s3 / (n * n * n)
    }
    let v = (dcov2(x, x) * dcov2(y, y)).sqrt();
    if v <= 0.0 {
        0.0
    } else {
        (dcov2(x, y).max(0.0) / v).sqrt()
    }
}
