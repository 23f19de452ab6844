// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "support/scenarios.hpp"

using namespace scenario;

namespace {

// Tolerances and bounds. Changing any of these changes what "accepted" means.
constexpr double kRidgeTol = 1e-8;
constexpr double kRidgeSeconds = 5.0;
constexpr double kConstantTol = 1e-6;
constexpr double kSineRmse = 0.05;
constexpr double kLanczosSeconds = 5.0;
constexpr double kEncodingMinR = 0.5;
constexpr std::size_t kLambdaSteps = 1;
constexpr double kEncodingSeconds = 300.0;
constexpr double kKktTol = 1e-4;
constexpr double kSelectionSeconds = 120.0;
constexpr double kPlateauTol = 0.02;
constexpr double kBm25Tol = 1e-9;
constexpr double kScalarGain = 0.10;
constexpr double kFusionSlack = 0.01;
constexpr double kRetrievalSeconds = 180.0;
constexpr double kNullTol = 0.05;
constexpr int kPermutations = 1000;
constexpr double kAgreement = 0.95;
constexpr double kDistillGap = 0.05;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void report(int id, const std::string& name, const Verdict& v)
{
    std::printf("criterion %2d %-28s %s  %s\n", id, name.c_str(), v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
    if (!v.pass) {
        ++g_failures;
    }
}

void run(int id, const std::string& name, const std::function<Verdict()>& body)
{
    try {
        report(id, name, body());
    } catch (const std::exception& e) {
        report(id, name, {false, std::string("exception: ") + e.what()});
    }
}

template <class... Args>
std::string fmt(const char* f, Args... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// Independent oracles

/// Dense Gaussian elimination with partial pivoting on (X'X + lambda I) theta = X'Y.
Matrix normal_equation_oracle(const Matrix& x, const Matrix& y, double lambda)
{
    const auto p = static_cast<int>(x.cols());
    const auto k = static_cast<int>(y.cols());
    std::vector<std::vector<double>> a(p, std::vector<double>(p + k, 0.0));
    for (int i = 0; i < p; ++i) {
        for (int j = 0; j < p; ++j) {
            double s = 0;
            for (int t = 0; t < x.rows(); ++t) {
                s += x(t, i) * x(t, j);
            }
            a[i][j] = s + (i == j ? lambda : 0.0);
        }
        for (int c = 0; c < k; ++c) {
            double s = 0;
            for (int t = 0; t < x.rows(); ++t) {
                s += x(t, i) * y(t, c);
            }
            a[i][p + c] = s;
        }
    }
    for (int col = 0; col < p; ++col) {
        int piv = col;
        for (int r = col + 1; r < p; ++r) {
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) {
                piv = r;
            }
        }
        std::swap(a[col], a[piv]);
        for (int r = col + 1; r < p; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < p + k; ++c) {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    Matrix theta(p, k);
    for (int c = 0; c < k; ++c) {
        for (int r = p - 1; r >= 0; --r) {
            double s = a[r][p + c];
            for (int j = r + 1; j < p; ++j) {
                s -= a[r][j] * theta(j, c);
            }
            theta(r, c) = s / a[r][r];
        }
    }
    return theta;
}

double brute_mrr(const std::vector<QueryRanking>& rankings, const QrelSet& qrels)
{
    double total = 0;
    for (const auto& r : rankings) {
        const auto& rel = qrels.at(r.query_id);
        std::size_t best = r.docs.size() + 1;
        for (const auto& d : rel) {
            for (std::size_t i = 0; i < r.docs.size(); ++i) {
                if (r.docs[i] == d) {
                    best = std::min(best, i + 1);
                }
            }
        }
        total += best <= r.docs.size() ? 1.0 / static_cast<double>(best) : 0.0;
    }
    return total / static_cast<double>(rankings.size());
}

double brute_recall(const std::vector<QueryRanking>& rankings, const QrelSet& qrels, std::size_t k)
{
    double total = 0;
    for (const auto& r : rankings) {
        const auto& rel = qrels.at(r.query_id);
        const std::set<std::string> top(r.docs.begin(), r.docs.begin() + static_cast<std::ptrdiff_t>(std::min(k, r.docs.size())));
        std::size_t hit = 0;
        for (const auto& d : rel) {
            hit += top.count(d);
        }
        total += static_cast<double>(hit) / static_cast<double>(rel.size());
    }
    return total / static_cast<double>(rankings.size());
}

// ---------------------------------------------------------------------------
// Shared planted runs

EncodingConfig encoding_config()
{
    EncodingConfig cfg;
    cfg.pca_components = 20;
    return cfg;
}

struct Shared {
    synth::EncodingSpec enc_spec;
    EncodingConfig enc_cfg = encoding_config();
    std::optional<EncodingRun> enc;
    std::optional<SelectionRun> sel;
    std::optional<RetrievalRun> ret;
    std::optional<DistillRun> dis;
    double enc_seconds = 0;
};

std::string rewrites_path()
{
    return std::string(QAEMB_DATA_DIR) + "/query_rewrites.json";
}

std::string diff_keys(const Artifacts& a, const Artifacts& b)
{
    std::string out;
    for (const auto& [k, v] : a) {
        auto it = b.find(k);
        if (it == b.end() || it->second != v) {
            out += (out.empty() ? "" : ",") + k;
        }
    }
    if (a.size() != b.size()) {
        out += (out.empty() ? "" : ",") + std::string("<key set>");
    }
    return out;
}

}  // namespace

int main()
{
    log::set_level(log::Level::warn);
    Shared sh;

    run(1, "ridge-normal-equations", [] {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(2024);
        std::normal_distribution<double> g;
        double worst = 0;
        for (int inst = 0; inst < 50; ++inst) {
            const int t = 5 + static_cast<int>(rng() % 36);
            const int p = 1 + static_cast<int>(rng() % 12);
            const int k = 1 + static_cast<int>(rng() % 5);
            const double lambda = std::pow(10.0, -1.0 + 3.0 * std::uniform_real_distribution<double>()(rng));
            Matrix x(t, p);
            Matrix y(t, k);
            for (auto& v : x.reshaped()) {
                v = g(rng);
            }
            for (auto& v : y.reshaped()) {
                v = g(rng);
            }
            const Matrix got = ridge_fit(x, y, lambda);
            worst = std::max(worst, (got - normal_equation_oracle(x, y, lambda)).cwiseAbs().maxCoeff());
        }
        const double secs = seconds_since(t0);
        return Verdict{worst < kRidgeTol && secs < kRidgeSeconds,
                       fmt("max|dtheta|=%.3g over 50 instances (tol %g), %.2fs", worst, kRidgeTol, secs)};
    });

    run(2, "lanczos-constant-and-sine", [] {
        const auto t0 = Clock::now();
        std::mt19937_64 rng(5);
        std::uniform_real_distribution<double> jitter(-0.2, 0.2);
        std::vector<double> times;
        for (double t = 0.0; t < 600.0; t += 0.5) {
            times.push_back(std::max(0.0, t + jitter(rng)));
        }
        std::sort(times.begin(), times.end());
        const TrSpec tr{2.0, 290, 6.0};
        const Matrix constant = Matrix::Constant(static_cast<Eigen::Index>(times.size()), 1, 3.25);
        const double const_err = (lanczos_resample(times, constant, tr).array() - 3.25).abs().maxCoeff();

        Matrix sine(static_cast<Eigen::Index>(times.size()), 1);
        for (std::size_t i = 0; i < times.size(); ++i) {
            sine(static_cast<Eigen::Index>(i), 0) = std::sin(2 * std::numbers::pi * 0.01 * times[i]);
        }
        const Matrix out = lanczos_resample(times, sine, tr);
        double sq = 0;
        for (int r = 0; r < tr.n_trs; ++r) {
            const double e = out(r, 0) - std::sin(2 * std::numbers::pi * 0.01 * tr.time_of(r));
            sq += e * e;
        }
        const double rmse = std::sqrt(sq / tr.n_trs);
        const double secs = seconds_since(t0);
        return Verdict{const_err < kConstantTol && rmse < kSineRmse && secs < kLanczosSeconds,
                       fmt("constant max err=%.3g (tol %g), 0.01 Hz sine RMSE=%.4f (< %g), %.2fs", const_err,
                           kConstantTol, rmse, kSineRmse, secs)};
    });

    run(3, "planted-encoding-recovery", [&] {
        const auto t0 = Clock::now();
        RuleOracle oracle(synth::make_encoding(sh.enc_spec).rules);
        sh.enc = run_encoding(sh.enc_spec, sh.enc_cfg, oracle);
        sh.enc_seconds = seconds_since(t0);
        const auto& e = *sh.enc;
        const auto steps = e.cv_lambda_index > e.oracle_lambda_index ? e.cv_lambda_index - e.oracle_lambda_index
                                                                     : e.oracle_lambda_index - e.cv_lambda_index;
        return Verdict{e.eval.mean_r >= kEncodingMinR && steps <= kLambdaSteps && sh.enc_seconds < kEncodingSeconds,
                       fmt("mean test r=%.4f (>= %g), cv lambda idx=%zu oracle idx=%zu (<= %zu step), delays=%d, "
                           "%.1fs",
                           e.eval.mean_r, kEncodingMinR, e.cv_lambda_index, e.oracle_lambda_index, kLambdaSteps,
                           e.model.n_delays, sh.enc_seconds)};
    });

    run(4, "elastic-net-planted-support", [&] {
        require(sh.enc.has_value(), ErrorCode::InvalidArgument, "criterion 3 did not produce a run");
        const auto t0 = Clock::now();
        sh.sel = run_selection(*sh.enc, sh.enc_cfg);
        const double secs = seconds_since(t0);
        const auto& s = *sh.sel;
        auto best = s.best_subset;
        std::sort(best.begin(), best.end());
        const bool subset_ok = best == sh.enc->instance.relevant;
        return Verdict{s.exact_support_found && subset_ok && s.worst_kkt < kKktTol && secs < kSelectionSeconds,
                       fmt("exact support on path=%s, exhaustive best subset %s planted {%s}, worst KKT=%.3g "
                           "(< %g), %.1fs",
                           s.exact_support_found ? "yes" : "no", subset_ok ? "==" : "!=",
                           text::join(sh.enc->instance.relevant, ",").c_str(), s.worst_kkt, kKktTol, secs)};
    });

    run(5, "pruning-curve-plateau", [&] {
        require(sh.sel.has_value(), ErrorCode::InvalidArgument, "criterion 4 did not produce a path");
        const auto& data = sh.enc->data;
        const auto n_relevant = sh.enc->instance.relevant.size();
        std::optional<double> small;
        std::optional<double> full;
        for (const auto& pt : sh.sel->curve.points) {
            if (pt.n_questions == n_relevant) {
                small = pt.mean_r;
            }
            if (pt.n_questions == data.question_ids.size()) {
                full = pt.mean_r;
            }
        }
        if (!full) {
            const auto m = refit_ridge(data.question_ids, data, sh.enc_cfg);
            full = evaluate(m, data.features_test, data.responses_test).mean_r;
        }
        if (!small) {
            return Verdict{false, fmt("no path point with support size %zu", n_relevant)};
        }
        const double gap = std::abs(*small - *full);
        return Verdict{gap <= kPlateauTol,
                       fmt("r(size %zu)=%.4f r(full)=%.4f |gap|=%.4f (<= %g)", n_relevant, *small, *full, gap,
                           kPlateauTol)};
    });

    run(6, "bm25-and-metric-oracles", [] {
        const Corpus corpus({{"d1", "the cat sat"}, {"d2", "the dog sat on the mat"}, {"d3", "cat cat dog"}});
        // N=3, df(cat)=2, avgdl=4, k1=1.2, b=0.75; K = 1.2*(0.25+0.75*3/4) for both length-3 docs.
        const double idf = std::log(1.6);
        const double k_short = 1.2 * (0.25 + 0.75 * 0.75);
        const std::vector<double> hand = {idf * 2.2 / (1.0 + k_short), 0.0, idf * 2.0 * 2.2 / (2.0 + k_short)};
        const auto got = bm25_scores("cat", corpus);
        double bm_err = 0;
        for (std::size_t i = 0; i < hand.size(); ++i) {
            bm_err = std::max(bm_err, std::abs(got[i] - hand[i]));
            bm_err = std::max(bm_err, std::abs(bm25_score("cat", corpus.ids()[i], corpus) - hand[i]));
        }

        std::mt19937_64 rng(99);
        std::vector<std::string> pool;
        for (int i = 0; i < 30; ++i) {
            pool.push_back("doc" + std::to_string(i));
        }
        std::vector<QueryRanking> rankings;
        QrelSet qrels;
        for (int q = 0; q < 100; ++q) {
            auto docs = pool;
            std::shuffle(docs.begin(), docs.end(), rng);
            docs.resize(5 + rng() % 26);
            const auto id = "q" + std::to_string(q);
            const auto n_rel = 1 + rng() % 4;
            while (qrels[id].size() < n_rel) {
                qrels[id].insert(pool[rng() % pool.size()]);
            }
            rankings.push_back({id, docs});
        }
        bool exact = mrr(rankings, qrels) == brute_mrr(rankings, qrels);
        for (std::size_t k : {1, 3, 5, 10, 20, 100}) {
            exact = exact && recall_at_k(rankings, qrels, k) == brute_recall(rankings, qrels, k);
        }
        return Verdict{bm_err <= kBm25Tol && exact,
                       fmt("3-doc BM-25 max err=%.3g (tol %g), MRR/Recall@{1,3,5,10,20,100} on 100 random rankings "
                           "%s brute force",
                           bm_err, kBm25Tol, exact ? "==" : "!=")};
    });

    run(7, "retrieval-scalar-learning", [&] {
        const auto t0 = Clock::now();
        RunConfig cfg;
        sh.ret = run_retrieval(synth::RetrievalSpec{}, cfg, rewrites_path());
        const double secs = seconds_since(t0);
        const auto& r = *sh.ret;
        const double gain = r.mrr_learned - r.mrr_ones;
        const double floor = std::max(r.mrr_bm25, r.mrr_learned) - kFusionSlack;
        return Verdict{gain >= kScalarGain && r.mrr_fused >= floor && secs < kRetrievalSeconds,
                       fmt("test MRR bm25=%.4f ones=%.4f learned=%.4f (gain %.4f >= %g) fused=%.4f (>= %.4f, c=%g), "
                           "%.1fs",
                           r.mrr_bm25, r.mrr_ones, r.mrr_learned, gain, kScalarGain, r.mrr_fused, floor,
                           r.coefficient, secs)};
    });

    run(8, "clustering-score", [] {
        Matrix hand(4, 1);
        hand << 0, 0, 1, 1;
        const double geometry = clustering_score(hand, {0, 0, 1, 1});

        const auto inst = synth::make_clustering();
        RuleOracle oracle(inst.rules);
        const auto& ds = inst.datasets.front();
        std::vector<std::string> texts;
        std::vector<int> labels;
        for (const auto& e : ds.examples) {
            texts.push_back(e.text);
            labels.push_back(e.label);
        }
        const Matrix emb = answer_matrix(texts, inst.general, oracle).values;
        std::mt19937_64 rng(31);
        double null_sum = 0;
        for (int i = 0; i < kPermutations; ++i) {
            std::shuffle(labels.begin(), labels.end(), rng);
            null_sum += clustering_score(emb, labels);
        }
        const double null_mean = null_sum / kPermutations;

        synth::TopicPruneClient pruner(inst.task_topics);
        const auto rows = adaptation_experiment(inst.general, inst.datasets, oracle, pruner);
        bool improved = !rows.empty();
        std::string per;
        for (const auto& r : rows) {
            improved = improved && r.adapted && *r.adapted > r.original;
            per += fmt(" %s:%.3f->%s", r.dataset.c_str(), r.original,
                       r.adapted ? fmt("%.3f", *r.adapted).c_str() : "NA");
        }
        return Verdict{geometry == 1.0 && std::abs(null_mean) < kNullTol && improved,
                       fmt("hand geometry=%.17g, permutation null mean=%.4f over %d (|.| < %g), adapted>original:%s",
                           geometry, null_mean, kPermutations, kNullTol, per.c_str())};
    });

    run(9, "distillation", [&] {
        require(sh.enc.has_value(), ErrorCode::InvalidArgument, "criterion 3 did not produce a run");
        const auto t0 = Clock::now();
        RunConfig cfg;
        sh.dis = run_distill(synth::DistillSpec{}, *sh.enc, sh.enc_cfg, cfg.student);
        const double secs = seconds_since(t0);
        const auto& d = *sh.dis;
        const double gap = std::abs(d.comparison.student_probabilistic_r - d.comparison.teacher_r);
        return Verdict{d.held_out_agreement >= kAgreement && gap <= kDistillGap,
                       fmt("held-out agreement=%.4f (>= %g), teacher r=%.4f student-prob r=%.4f (|gap| %.4f <= %g), "
                           "student-binary r=%.4f, %.1fs",
                           d.held_out_agreement, kAgreement, d.comparison.teacher_r,
                           d.comparison.student_probabilistic_r, gap, kDistillGap, d.comparison.student_binary_r,
                           secs)};
    });

    run(10, "determinism-and-warm-cache", [&] {
        require(sh.enc && sh.sel && sh.ret && sh.dis, ErrorCode::InvalidArgument,
                "criteria 3, 4, 7 and 9 must have produced runs");
        const auto t0 = Clock::now();
        std::string bad;
        auto check = [&](const char* what, const Artifacts& a, const Artifacts& b) {
            const auto d = diff_keys(a, b);
            if (!d.empty()) {
                bad += std::string(bad.empty() ? "" : "; ") + what + ": " + d;
            }
        };

        // Criterion 3 through the remote path: a cold run fills the cache, a
        // warm run must not reach the model at all.
        const auto cache_dir = std::filesystem::temp_directory_path() /
                               ("qaemb-accept-cache-" + std::to_string(std::random_device{}()));
        const auto rules = synth::make_encoding(sh.enc_spec).rules;
        const auto bank = synth::make_encoding(sh.enc_spec).bank;
        AnswererSpec spec;
        spec.model_id = "oracle-chat";
        std::size_t cold_calls = 0;
        std::size_t warm_calls = 0;
        {
            auto client = std::make_shared<OracleChatClient>(bank, rules);
            RemoteAnswerer cold(spec, client, AnswerCache(cache_dir));
            check("encoding (cold cache)", sh.enc->artifacts, run_encoding(sh.enc_spec, sh.enc_cfg, cold).artifacts);
            cold_calls = client->calls();
        }
        std::optional<EncodingRun> warm_run;
        {
            auto client = std::make_shared<OracleChatClient>(bank, rules);
            RemoteAnswerer warm(spec, client, AnswerCache(cache_dir));
            warm_run = run_encoding(sh.enc_spec, sh.enc_cfg, warm);
            warm_calls = client->calls();
            check("encoding (warm cache)", sh.enc->artifacts, warm_run->artifacts);
        }
        std::error_code ec;
        std::filesystem::remove_all(cache_dir, ec);

        check("selection", sh.sel->artifacts, run_selection(*warm_run, sh.enc_cfg).artifacts);
        RunConfig cfg;
        check("retrieval", sh.ret->artifacts, run_retrieval(synth::RetrievalSpec{}, cfg, rewrites_path()).artifacts);
        check("distill", sh.dis->artifacts,
              run_distill(synth::DistillSpec{}, *warm_run, sh.enc_cfg, cfg.student).artifacts);
        const double secs = seconds_since(t0);
        const bool ok = bad.empty() && warm_calls == 0 && cold_calls > 0;
        return Verdict{ok, fmt("reruns of 3/4/7/9 byte-identical: %s; model calls cold=%zu warm=%zu, %.1fs",
                               bad.empty() ? "yes" : bad.c_str(), cold_calls, warm_calls, secs)};
    });

    run(11, "yes-no-parsing-and-ensemble", [] {
        struct Case {
            const char* text;
            std::optional<int> want;
        };
        const std::vector<Case> corpus = {
            {"Yes, because the text says 'noon'.", 1},
            {"No", 0},
            {"Maybe yes, maybe no", std::nullopt},
            {"   yes", 1},
            {"NO.", 0},
            {"I think yes.", 1},
            {"I would say no", 0},
            {"", std::nullopt},
            {"...", std::nullopt},
            {"Yesterday it rained", std::nullopt},
            {"Nope", std::nullopt},
            {"Not sure", std::nullopt},
            {"The answer is: Yes", 1},
            {"Possibly.\nYes", std::nullopt},
            {"Unclear, yes and no", std::nullopt},
            {"no, not really, yes in a sense", 0},
            {"**Yes**", 1},
            {"Answer: no\nyes", 0},
            {"Noon is mentioned", std::nullopt},
            {"It depends; I cannot tell.", std::nullopt},
        };
        int wrong = 0;
        std::string which;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (parse_yes_no(corpus[i].text) != corpus[i].want) {
                ++wrong;
                which += " #" + std::to_string(i + 1);
            }
        }

        const QuestionBank bank("b", {{"q0001", "Does it rain?", ""}, {"q0002", "Is it noon?", ""}});
        RuleOracle oracle({{"q0001", {"rain"}}, {"q0002", {"noon"}}});
        const auto m = answer_matrix({"rain at noon", "dry night", "noon", "rain"}, bank, oracle);
        const auto e = ensemble({m, m, m, m});
        const bool identity = e.values == m.values && e.texts == m.texts && e.bank == m.bank;
        return Verdict{wrong == 0 && identity,
                       fmt("%zu-case corpus misclassified=%d%s, 4-way ensemble of agreeing matrices %s identity",
                           corpus.size(), wrong, which.c_str(), identity ? "is" : "is not")};
    });

    std::printf("%s: %d criteria failed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED", g_failures);
    return g_failures == 0 ? 0 : 1;
}
