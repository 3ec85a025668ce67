#include "svynn/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "svynn/errors.hpp"
#include "svynn/rng.hpp"

namespace svynn {

namespace {

double trunc_normal(Rng& rng, double mean, double sd, double lo, double hi) {
    for (int tries = 0; tries < 1000; ++tries) {
        const double v = mean + sd * rng.normal();
        if (v >= lo && v <= hi) return v;
    }
    return mean < lo ? lo : (mean > hi ? hi : mean);
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace

void write_synthetic_extract(const std::string& path, std::size_t n, std::uint64_t seed) {
    if (n == 0) throw invalid_input("write_synthetic_extract: n must be positive");
    std::ofstream out(path);
    if (!out) throw schema_error("cannot open output file: " + path);

    out << "id,weight,age,height,weight_kg,bmi,waist,dbp,sbp,pulse,cholesterol,"
           "triglycerides,gender,race,glucose,hba1c,prior_dx\n";

    constexpr double kPrevalence = 0.32;
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(seed, i);
        const bool diabetic = rng.bernoulli(kPrevalence);

        const double age = trunc_normal(rng, diabetic ? 54.1 : 44.8,
                                        diabetic ? 15.2 : 16.2, 10.0, 80.0);
        const double height = trunc_normal(rng, diabetic ? 88.3 : 80.8,
                                           diabetic ? 22.5 : 19.3, 20.0, 250.0);
        const double weight_kg = trunc_normal(rng, diabetic ? 169.1 : 169.4,
                                              diabetic ? 10.1 : 9.6, 100.0, 250.0);
        const double bmi = trunc_normal(rng, diabetic ? 30.8 : 28.08,
                                        diabetic ? 7.13 : 6.16, 12.0, 70.0);
        const double waist = trunc_normal(rng, diabetic ? 96.9 : 105.6,
                                          diabetic ? 14.9 : 16.8, 40.0, 200.0);
        const double dbp = trunc_normal(rng, diabetic ? 71.1 : 70.9,
                                        diabetic ? 12.2 : 11.2, 30.0, 130.0);
        const double sbp = trunc_normal(rng, diabetic ? 126.0 : 119.2,
                                        diabetic ? 16.5 : 15.5, 70.0, 230.0);
        const double pulse = trunc_normal(rng, diabetic ? 73.7 : 71.5,
                                          diabetic ? 12.1 : 11.36, 35.0, 160.0);
        const double chol = trunc_normal(rng, diabetic ? 5.0 : 4.98,
                                         diabetic ? 1.1 : 1.0, 1.0, 12.0);
        const double trig = trunc_normal(rng, diabetic ? 2.09 : 1.55,
                                         diabetic ? 1.7 : 1.06, 0.2, 15.0);
        const int gender = rng.bernoulli(diabetic ? 0.47 : 0.50) ? 1 : 0;
        const int race = static_cast<int>(1 + rng.uniform_below(6));

        double glucose, hba1c;
        int prior_dx = 0;
        if (diabetic) {
            // mix of treated/controlled patients (diagnosed, biomarkers back
            // in the normal range) and biomarker-driven cases
            if (rng.bernoulli(0.40)) {
                glucose = trunc_normal(rng, 102.0, 12.0, 40.0, 125.9);
                hba1c = trunc_normal(rng, 5.8, 0.4, 3.5, 6.49);
                prior_dx = 1;
            } else {
                glucose = trunc_normal(rng, 140.0, 45.0, 40.0, 400.0);
                hba1c = trunc_normal(rng, 6.6, 1.3, 3.5, 15.0);
                if (glucose < 126.0 && hba1c < 6.5)
                    prior_dx = 1;
                else
                    prior_dx = rng.bernoulli(0.4) ? 1 : 0;
            }
        } else {
            glucose = trunc_normal(rng, 89.0, 10.0, 40.0, 125.9);
            hba1c = trunc_normal(rng, 5.33, 0.35, 3.5, 6.49);
        }

        const double weight = std::exp(10.0 + 0.5 * rng.normal());

        out << (i + 1) << ',' << num(weight) << ',' << num(age) << ',' << num(height) << ','
            << num(weight_kg) << ',' << num(bmi) << ',' << num(waist) << ',' << num(dbp)
            << ',' << num(sbp) << ',' << num(pulse) << ',' << num(chol) << ',' << num(trig)
            << ',' << gender << ',' << race << ',' << num(glucose) << ',' << num(hba1c)
            << ',' << prior_dx << '\n';
    }
}

} // namespace svynn
