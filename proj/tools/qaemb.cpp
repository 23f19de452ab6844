// qaemb command-line entry point.
//
//   qaemb <subcommand> [--config path] [--flag value]...
//
// Logs go to stderr, artifacts under --out. Each artifact gets a
// <artifact>.meta.json sidecar. Failures print one JSON record on stderr and
// exit nonzero.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qaemb/qaemb.hpp"

namespace fs = std::filesystem;
using namespace qaemb;
using ojson = nlohmann::ordered_json;

namespace {

/// Flags shared by every subcommand; each one overrides the config file.
struct CommonFlags {
    std::string config;
    std::vector<std::string> answerers;
    std::string cache_dir;
    std::string bank;
    std::string out;
    std::uint64_t seed = 0;
    double temperature = 0;
    int max_concurrency = 1;
    bool ensemble = false;

    CLI::Option* o_seed = nullptr;
    CLI::Option* o_temperature = nullptr;
    CLI::Option* o_concurrency = nullptr;
    CLI::Option* o_ensemble = nullptr;
};

void add_common(CLI::App* sub, CommonFlags& f, bool answerer = true, bool bank = true)
{
    sub->add_option("--config", f.config, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output path");
    f.o_seed = sub->add_option("--seed", f.seed, "master seed");
    if (bank) {
        sub->add_option("--bank", f.bank, "question bank (JSONL)");
    }
    if (answerer) {
        sub->add_option("--answerer", f.answerers, "oracle:rules.json or remote:model[:template]; repeatable");
        sub->add_option("--cache-dir", f.cache_dir, "answer cache directory for remote answerers");
        f.o_temperature = sub->add_option("--temperature", f.temperature, "sampling temperature");
        f.o_concurrency = sub->add_option("--max-concurrency", f.max_concurrency, "parallel requests");
        f.o_ensemble = sub->add_flag("--ensemble", f.ensemble, "average the answers of all answerers");
    }
}

RunConfig resolve_config(const CommonFlags& f)
{
    RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (!f.answerers.empty()) {
        c.answerers = f.answerers;
    }
    if (!f.cache_dir.empty()) {
        c.cache_dir = f.cache_dir;
    }
    if (!f.bank.empty()) {
        c.bank = f.bank;
    }
    if (!f.out.empty()) {
        c.out = f.out;
    }
    if (f.o_seed != nullptr && f.o_seed->count() > 0) {
        apply_seed(c, f.seed);
    }
    if (f.o_temperature != nullptr && f.o_temperature->count() > 0) {
        c.temperature = f.temperature;
    }
    if (f.o_concurrency != nullptr && f.o_concurrency->count() > 0) {
        c.max_concurrency = f.max_concurrency;
    }
    if (f.o_ensemble != nullptr && f.o_ensemble->count() > 0) {
        c.ensemble = f.ensemble;
    }
    validate(c);
    require(!c.out.empty(), ErrorCode::ConfigInvalid, "--out is required");
    return c;
}

void require_file(const std::string& path, const std::string& what)
{
    require(!path.empty(), ErrorCode::MissingInput, what + " is required");
    require(fs::exists(path), ErrorCode::MissingInput, what + " not found: " + path);
}

/// Writes artifacts and their sidecars for one command run.
class Emitter {
  public:
    Emitter(const RunConfig& cfg, std::string command) : m_cfg(cfg), m_command(std::move(command)) {}

    void set_bank(const QuestionBank& bank) { m_bank_hash = bank_hash(bank); }
    void set_extra(ojson extra) { m_extra = std::move(extra); }

    void write(const fs::path& path, std::string_view content) const
    {
        prepare(path);
        text::write_file(path.string(), content);
        sidecar(path);
    }

    void matrix(const fs::path& path, const Matrix& m) const
    {
        prepare(path);
        save_matrix(m, path.string());
        sidecar(path);
    }

    void json(const fs::path& path, const ojson& j) const { write(path, j.dump(2) + "\n"); }

    /// Sidecars for every regular file already written into `dir`.
    void directory(const fs::path& dir) const
    {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.is_regular_file() && e.path().string().find(".meta.json") == std::string::npos) {
                files.push_back(e.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& p : files) {
            sidecar(p);
        }
    }

    void sidecar(const fs::path& path) const
    {
        auto meta = artifact_metadata(m_cfg, m_command, m_bank_hash);
        if (!m_extra.is_null()) {
            meta["details"] = m_extra;
        }
        write_metadata(path, meta);
    }

  private:
    static void prepare(const fs::path& path)
    {
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
    }

    const RunConfig& m_cfg;
    std::string m_command;
    std::string m_bank_hash;
    ojson m_extra;
};

// ---------------------------------------------------------------------------
// Answerers

struct AnswererSet {
    std::vector<std::unique_ptr<Answerer>> owned;

    std::vector<Answerer*> pointers() const
    {
        std::vector<Answerer*> out;
        for (const auto& a : owned) {
            out.push_back(a.get());
        }
        return out;
    }
};

AnswererSet make_answerers(const RunConfig& cfg)
{
    require(!cfg.answerers.empty(), ErrorCode::ConfigInvalid, "at least one --answerer is required");
    AnswererSet set;
    std::shared_ptr<CompletionClient> client;
    for (const auto& s : cfg.answerers) {
        const auto parts = text::split(s, ':');
        require(parts.size() >= 2, ErrorCode::ConfigInvalid, "answerer must be oracle:<rules> or remote:<model>");
        if (parts[0] == "oracle") {
            const auto path = s.substr(7);
            require_file(path, "oracle rules");
            set.owned.push_back(std::make_unique<RuleOracle>(RuleOracle::load(path)));
        } else if (parts[0] == "remote") {
            require(parts.size() <= 3, ErrorCode::ConfigInvalid, "answerer must be remote:<model>[:<template>]");
            if (!client) {
                client = std::make_shared<HttpCompletionClient>(HttpCompletionClient::from_env());
            }
            AnswererSpec spec;
            spec.model_id = parts[1];
            if (parts.size() == 3) {
                spec.prompt_template_id = parts[2];
            }
            spec.temperature = cfg.temperature;
            spec.max_concurrency = cfg.max_concurrency;
            std::optional<AnswerCache> cache;
            if (!cfg.cache_dir.empty()) {
                cache.emplace(cfg.cache_dir);
            }
            set.owned.push_back(std::make_unique<RemoteAnswerer>(spec, client, std::move(cache)));
        } else {
            fail(ErrorCode::ConfigInvalid, "unknown answerer kind '" + parts[0] + "'");
        }
    }
    require(cfg.ensemble || set.owned.size() == 1, ErrorCode::ConfigInvalid,
            "several answerers need --ensemble");
    return set;
}

QuestionBank bank_from(const RunConfig& cfg)
{
    require_file(cfg.bank, "--bank");
    return load_bank(cfg.bank);
}

std::vector<std::string> read_lines(const std::string& path)
{
    require_file(path, "text file");
    std::vector<std::string> out;
    for (auto& line : text::split_lines(text::read_file(path))) {
        if (!text::trim(line).empty()) {
            out.push_back(std::move(line));
        }
    }
    require(!out.empty(), ErrorCode::EmptyDataset, path + " has no non-empty lines");
    return out;
}

ojson provenance_of(const AnswerMatrix& m)
{
    return provenance_json(m);
}

// ---------------------------------------------------------------------------
// TR-level features: either precomputed or embedded from a story.

struct FeatureSource {
    std::string features;
    std::string story;
    std::string tr;

    void add(CLI::App* sub)
    {
        sub->add_option("--features", features, "TR-level feature matrix (.mat or .csv)");
        sub->add_option("--story", story, "story words JSONL {word, onset}");
        sub->add_option("--tr", tr, "TR spec JSON {tr_sec, n_trs, start_sec}");
    }

    /// Returns the features and the question ids they follow. `computed` is
    /// set when the features had to be embedded.
    std::pair<Matrix, std::vector<std::string>> load(const RunConfig& cfg, Emitter& emit, bool& computed) const
    {
        const auto bank = bank_from(cfg);
        emit.set_bank(bank);
        computed = false;
        if (!features.empty()) {
            require_file(features, "--features");
            Matrix x = load_matrix(features);
            require(x.cols() == static_cast<Eigen::Index>(bank.size()), ErrorCode::ShapeMismatch,
                    "feature columns differ from bank size");
            return {x, bank.ids()};
        }
        require_file(story, "--story (or --features)");
        require_file(tr, "--tr");
        const auto stim = load_story(story, tr);
        auto answerers = make_answerers(cfg);
        const auto track = embed_story(stim, bank, answerers.pointers(), {cfg.context_n, true}, cfg.ensemble);
        computed = true;
        return {lanczos_resample(track, stim.tr, cfg.lanczos_window), bank.ids()};
    }
};

Eigen::Index split_point(Eigen::Index t, int requested)
{
    const auto n = requested > 0 ? static_cast<Eigen::Index>(requested)
                                 : static_cast<Eigen::Index>(std::llround(0.8 * static_cast<double>(t)));
    require(n > 1 && n < t - 1, ErrorCode::InvalidArgument,
            "train/test split at TR " + std::to_string(n) + " leaves an empty side (T=" + std::to_string(t) + ")");
    return n;
}

EncodingData split_data(const Matrix& x, const Matrix& y, const std::vector<std::string>& ids, int train_trs)
{
    require(x.rows() == y.rows(), ErrorCode::ShapeMismatch,
            "features have " + std::to_string(x.rows()) + " TRs, responses " + std::to_string(y.rows()));
    const auto n = split_point(x.rows(), train_trs);
    return {x.topRows(n), x.bottomRows(x.rows() - n), y.topRows(n), y.bottomRows(y.rows() - n), ids};
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_generate_questions(const CommonFlags& f, const std::vector<std::string>& prompts,
                            const std::vector<std::string>& vars, const std::string& model, const std::string& name)
{
    const auto cfg = resolve_config(f);
    require(!prompts.empty(), ErrorCode::MissingInput, "at least one --prompt is required");
    require(!model.empty(), ErrorCode::ConfigInvalid, "--model is required");
    std::map<std::string, std::string> values;
    for (const auto& v : vars) {
        const auto eq = v.find('=');
        require(eq != std::string::npos, ErrorCode::ConfigInvalid, "--var expects key=file, got " + v);
        require_file(v.substr(eq + 1), "--var " + v.substr(0, eq));
        values[v.substr(0, eq)] = text::read_file(v.substr(eq + 1));
    }
    auto client = HttpCompletionClient::from_env();
    LlmCallOptions llm{model, cfg.temperature};
    std::vector<std::vector<Question>> lists;
    for (const auto& p : prompts) {
        require_file(p, "--prompt");
        lists.push_back(generate_questions(client, text::read_file(p), values, fs::path(p).stem().string(), llm));
        log::info(p + ": " + std::to_string(lists.back().size()) + " questions");
    }
    const auto bank = merge_generated(name, lists);
    Emitter emit(cfg, "generate-questions");
    emit.set_bank(bank);
    emit.write(cfg.out, to_jsonl(bank));
}

void cmd_prune(const CommonFlags& f, const std::string& task, const std::string& model)
{
    const auto cfg = resolve_config(f);
    require(!task.empty(), ErrorCode::ConfigInvalid, "--task is required");
    require(!model.empty(), ErrorCode::ConfigInvalid, "--model is required");
    const auto bank = bank_from(cfg);
    auto client = HttpCompletionClient::from_env();
    const auto pruned = prune_with_llm(bank, task, client, {model, cfg.temperature});
    Emitter emit(cfg, "prune");
    emit.set_bank(bank);
    emit.set_extra({{"task", task}, {"kept", pruned.size()}, {"of", bank.size()}});
    emit.write(cfg.out, to_jsonl(pruned));
}

void cmd_embed(const CommonFlags& f, const std::string& texts_path)
{
    const auto cfg = resolve_config(f);
    const auto bank = bank_from(cfg);
    const auto texts = read_lines(texts_path);
    auto answerers = make_answerers(cfg);
    const auto m = embed_texts(texts, bank, answerers.pointers(), cfg.ensemble);
    Emitter emit(cfg, "embed");
    emit.set_bank(bank);
    emit.set_extra({{"texts", texts_path}, {"provenance", provenance_of(m)}});
    emit.matrix(cfg.out, m.values);
}

void cmd_fit_encoding(const CommonFlags& f, const FeatureSource& src, const std::string& responses, int train_trs)
{
    const auto cfg = resolve_config(f);
    require_file(responses, "--responses");
    Emitter emit(cfg, "fit-encoding");
    bool computed = false;
    const auto [x, ids] = src.load(cfg, emit, computed);
    const auto data = split_data(x, load_matrix(responses), ids, train_trs);
    auto enc = cfg.encoding;
    enc.lanczos_window = cfg.lanczos_window;
    auto model = fit_encoding(data, enc);
    model.bank_hash = bank_hash(bank_from(cfg));
    const fs::path out(cfg.out);
    emit.set_extra({{"train_trs", data.features_train.rows()}, {"test_trs", data.features_test.rows()}});
    if (computed) {
        emit.matrix(out / "features.mat", x);
    }
    save_model(model, out / "model");
    emit.directory(out / "model");
    emit.write(out / "cv_table.csv", cv_table_csv(model.cv));
    log::info("selected lambda " + std::to_string(model.lambda) + " with " + std::to_string(model.n_delays) +
              " delays (CV r " + std::to_string(model.cv.best_score) + ")");
}

void cmd_eval_encoding(const CommonFlags& f, const FeatureSource& src, const std::string& model_dir,
                       const std::string& responses, int train_trs)
{
    const auto cfg = resolve_config(f);
    require_file(responses, "--responses");
    require(fs::is_directory(model_dir), ErrorCode::MissingInput, "--model must be a model directory");
    Emitter emit(cfg, "eval-encoding");
    bool computed = false;
    const auto [x, ids] = src.load(cfg, emit, computed);
    const auto model = load_model(model_dir);
    const auto data = split_data(x, load_matrix(responses), ids, train_trs);
    const auto restricted = model.question_ids == ids ? data : data.restrict_to(model.question_ids);
    const auto res = evaluate(model, restricted.features_test, restricted.responses_test);
    const fs::path out(cfg.out);
    emit.matrix(out / "voxel_r.mat", Matrix(res.voxel_r));
    emit.json(out / "eval.json", {{"mean_r", res.mean_r},
                                  {"n_voxels", res.voxel_r.size()},
                                  {"zero_variance_voxels", res.zero_variance},
                                  {"test_trs", restricted.features_test.rows()}});
    std::cout << "mean test r " << res.mean_r << "\n";
}

void cmd_select(const CommonFlags& f, const FeatureSource& src, const std::string& responses, int train_trs)
{
    const auto cfg = resolve_config(f);
    require_file(responses, "--responses");
    Emitter emit(cfg, "select");
    bool computed = false;
    const auto [x, ids] = src.load(cfg, emit, computed);
    const auto data = split_data(x, load_matrix(responses), ids, train_trs);
    auto enc = cfg.encoding;
    enc.lanczos_window = cfg.lanczos_window;
    const auto path = select_questions(data, enc, cfg.enet);
    const auto curve = pruning_curve(path, data, enc);
    const fs::path out(cfg.out);
    emit.write(out / "path.csv", path_csv(path));
    emit.write(out / "curve.csv", curve_csv(curve));
}

void cmd_retrieve(const CommonFlags& f, const std::string& corpus_path, const std::string& queries_path,
                  const std::string& qrels_path, const std::string& rewrites)
{
    const auto cfg = resolve_config(f);
    require_file(corpus_path, "--corpus");
    require_file(queries_path, "--queries");
    require_file(qrels_path, "--qrels");
    const auto bank = bank_from(cfg);
    const Corpus corpus = load_corpus_tsv(corpus_path);
    QuestionBank doc_bank = bank;
    if (!rewrites.empty()) {
        require_file(rewrites, "--rewrites");
        doc_bank = rewrite_questions(bank, load_rewrite_rules(rewrites));
    }
    auto answerers = make_answerers(cfg);

    RetrievalInputs in;
    in.corpus = &corpus;
    in.queries = load_queries_tsv(queries_path);
    in.qrels = load_qrels_tsv(qrels_path, corpus);
    std::vector<std::string> qids;
    std::vector<std::string> qtexts;
    for (const auto& [id, t] : in.queries) {
        if (in.qrels.count(id) != 0) {
            qids.push_back(id);
        }
        qtexts.push_back(t);
    }
    require(qids.size() >= 2, ErrorCode::EmptyDataset, "need at least two queries with relevance judgments");
    in.query_emb = embed_texts(qtexts, bank, answerers.pointers(), cfg.ensemble).values;
    in.doc_emb = embed_texts(corpus.texts(), doc_bank, answerers.pointers(), cfg.ensemble).values;

    const auto [train, test] = split_queries(qids, cfg.train_frac, cfg.seed);
    const auto learned =
        learn_scalars(train, in.qrels, query_row_index(in), in.query_emb, corpus, in.doc_emb, cfg.retrieval);

    const auto d = static_cast<std::size_t>(bank.size());
    ojson rows = ojson::array();
    RankOptions opts;
    opts.fusion = cfg.fusion;
    auto add = [&](const std::string& name, std::size_t size) {
        rows.push_back(to_json(make_report(name, rank_queries(in, test, opts), in.qrels, size)));
    };
    opts.scorer = Scorer::bm25;
    add("BM-25", 0);
    opts.scorer = Scorer::bag1;
    add("Bag-of-ngrams (uni)", 0);
    opts.scorer = Scorer::bag2;
    add("Bag-of-ngrams (bi)", 0);
    opts.scorer = Scorer::bag3;
    add("Bag-of-ngrams (tri)", 0);
    opts.scorer = Scorer::qa;
    add("QA-Emb", d);
    opts.weights = learned.weights;
    add("QA-Emb (learned scalars)", d);
    const double c = select_fusion_coefficient(in, train, opts, cfg.fusion_grid);
    opts.scorer = Scorer::fused;
    opts.qa_coefficient = c;
    add("BM-25 + QA-Emb", d);

    Emitter emit(cfg, "retrieve");
    emit.set_bank(bank);
    emit.set_extra({{"train_queries", train.size()}, {"test_queries", test.size()}, {"fusion_coefficient", c}});
    const fs::path out(cfg.out);
    emit.json(out / "report.json", {{"fusion", std::string(to_string(cfg.fusion))},
                                    {"fusion_coefficient", c},
                                    {"train_queries", train.size()},
                                    {"test_queries", test.size()},
                                    {"epoch_loss", learned.epoch_loss},
                                    {"methods", rows}});
    emit.matrix(out / "weights.mat", Matrix(learned.weights));
}

void cmd_cluster_score(const CommonFlags& f, const std::string& manifest_path, const std::string& prune_model,
                       bool l2)
{
    const auto cfg = resolve_config(f);
    require_file(manifest_path, "--manifest");
    const auto general = bank_from(cfg);
    const auto base = fs::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(text::read_file(manifest_path));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::ConfigInvalid, manifest_path + ": " + e.what());
    }
    require(manifest.is_array() && !manifest.empty(), ErrorCode::ConfigInvalid, "manifest must be a non-empty array");

    std::vector<AdaptationDataset> datasets;
    std::vector<std::optional<QuestionBank>> pruned;
    std::unique_ptr<HttpCompletionClient> client;
    for (const auto& entry : manifest) {
        AdaptationDataset ds;
        std::string pruned_path;
        try {
            ds.name = entry.at("name").get<std::string>();
            ds.task_description = entry.value("task", "");
            ds.examples = load_labeled_tsv(resolve(entry.at("path").get<std::string>()).string());
            pruned_path = entry.value("pruned_bank", "");
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::ConfigInvalid, manifest_path + ": " + e.what());
        }
        if (!pruned_path.empty()) {
            pruned.emplace_back(load_bank(resolve(pruned_path).string()));
        } else {
            require(!prune_model.empty(), ErrorCode::ConfigInvalid,
                    ds.name + " has no pruned_bank; pass --prune-model to prune with an LLM");
            if (!client) {
                client = std::make_unique<HttpCompletionClient>(HttpCompletionClient::from_env());
            }
            try {
                pruned.emplace_back(prune_with_llm(general, ds.task_description, *client, {prune_model, cfg.temperature}));
            } catch (const Error& e) {
                log::warn("pruning for " + ds.name + " failed: " + e.what());
                pruned.emplace_back(std::nullopt);
            }
        }
        datasets.push_back(std::move(ds));
    }
    auto answerers = make_answerers(cfg);
    require(answerers.owned.size() == 1, ErrorCode::ConfigInvalid, "cluster-score takes a single answerer");
    const auto rows = adaptation_experiment(general, pruned, datasets, *answerers.owned.front(), {l2});

    ojson j = ojson::array();
    for (const auto& r : rows) {
        j.push_back({{"dataset", r.dataset},
                     {"original", r.original},
                     {"adapted", r.adapted ? ojson(*r.adapted) : ojson(nullptr)},
                     {"original_size", r.original_size},
                     {"adapted_size", r.adapted_size},
                     {"error", r.error}});
    }
    Emitter emit(cfg, "cluster-score");
    emit.set_bank(general);
    const fs::path out(cfg.out);
    emit.write(out / "adaptation.csv", adaptation_csv(rows));
    emit.json(out / "adaptation.json", j);
}

void cmd_distill(const CommonFlags& f, const std::string& texts_path, const FeatureSource& src,
                 const std::string& responses, int train_trs)
{
    const auto cfg = resolve_config(f);
    const auto bank = bank_from(cfg);
    auto answerers = make_answerers(cfg);
    const bool with_story = !src.story.empty();
    require(!texts_path.empty() || with_story, ErrorCode::MissingInput, "--texts or --story is required");

    Emitter emit(cfg, "distill");
    emit.set_bank(bank);
    const fs::path out(cfg.out);

    std::optional<StoryStimulus> story;
    std::vector<std::string> contexts;
    AnswerMatrix teacher_story;
    Eigen::Index n_train_trs = 0;
    Matrix y;
    if (with_story) {
        require_file(src.tr, "--tr");
        require_file(responses, "--responses");
        story = load_story(src.story, src.tr);
        y = load_matrix(responses);
        n_train_trs = split_point(y.rows(), train_trs);
        contexts = story_contexts(*story, {cfg.context_n, true});
        teacher_story = embed_texts(contexts, bank, answerers.pointers(), cfg.ensemble);
    }

    // The student learns from --texts when given, else from the story's
    // training-segment contexts.
    std::vector<std::string> train_texts;
    AnswerMatrix teacher_train;
    if (!texts_path.empty()) {
        train_texts = read_lines(texts_path);
        teacher_train = binarize(embed_texts(train_texts, bank, answerers.pointers(), cfg.ensemble));
    } else {
        const double split_time = story->tr.time_of(static_cast<int>(n_train_trs));
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < story->words.size(); ++i) {
            if (story->words[i].onset < split_time) {
                rows.push_back(static_cast<Eigen::Index>(i));
                train_texts.push_back(contexts[i]);
            }
        }
        teacher_train = binarize(teacher_story);
        teacher_train.texts = train_texts;
        teacher_train.values = teacher_train.values(rows, Eigen::all).eval();
    }
    const auto trained = train_student(train_texts, teacher_train, cfg.student);

    std::vector<std::string> val_texts;
    std::vector<Eigen::Index> val_rows;
    for (auto r : trained.validation_rows) {
        val_texts.push_back(train_texts[r]);
        val_rows.push_back(static_cast<Eigen::Index>(r));
    }
    const double val_agreement =
        val_texts.empty() ? std::nan("")
                          : agreement((student_embed(trained.model, val_texts, StudentMode::probabilistic).values.array() >=
                                       0.5)
                                          .cast<double>()
                                          .matrix(),
                                      teacher_train.values(val_rows, Eigen::all));

    save_student(trained.model, out / "student");
    emit.directory(out / "student");
    emit.json(out / "training.json", {{"train_rows", trained.train_rows.size()},
                                      {"validation_rows", trained.validation_rows.size()},
                                      {"best_epoch", trained.best_epoch},
                                      {"validation_agreement", val_agreement},
                                      {"train_loss", trained.train_loss},
                                      {"validation_loss", trained.validation_loss}});

    if (with_story) {
        DistillTracks tracks;
        for (const auto& w : story->words) {
            tracks.times.push_back(w.onset);
        }
        tracks.teacher = teacher_story.values;
        tracks.student_probabilistic = student_embed(trained.model, contexts, StudentMode::probabilistic).values;
        auto enc = cfg.encoding;
        enc.lanczos_window = cfg.lanczos_window;
        auto cmp = distilled_encoding_comparison(tracks, story->tr, y, n_train_trs, bank.ids(), enc);
        const double split_time = story->tr.time_of(static_cast<int>(n_train_trs));
        std::vector<Eigen::Index> test_rows;
        for (std::size_t i = 0; i < story->words.size(); ++i) {
            if (story->words[i].onset >= split_time) {
                test_rows.push_back(static_cast<Eigen::Index>(i));
            }
        }
        if (!test_rows.empty()) {
            const Matrix bin = (tracks.student_probabilistic.array() >= 0.5).cast<double>().matrix();
            cmp.test_agreement =
                agreement(bin(test_rows, Eigen::all), binarize(teacher_story).values(test_rows, Eigen::all));
        }
        emit.write(out / "distill.csv", distill_report_csv(cmp));
    }
}

void cmd_qa_accuracy(const CommonFlags& f, const std::vector<std::string>& tasks)
{
    const auto cfg = resolve_config(f);
    const auto bank = bank_from(cfg);
    require(!tasks.empty(), ErrorCode::MissingInput, "at least one --task question_id=labels.tsv is required");
    auto answerers = make_answerers(cfg);
    require(answerers.owned.size() == 1, ErrorCode::ConfigInvalid, "qa-accuracy takes a single answerer");
    auto& answerer = *answerers.owned.front();

    std::ostringstream csv;
    csv << std::setprecision(6) << std::fixed << "question_id,dataset,n,accuracy\n";
    double sum = 0;
    for (const auto& t : tasks) {
        const auto eq = t.find('=');
        require(eq != std::string::npos, ErrorCode::ConfigInvalid, "--task expects question_id=labels.tsv");
        const auto qid = t.substr(0, eq);
        const auto path = t.substr(eq + 1);
        const auto j = bank.index_of(qid);
        require(j.has_value(), ErrorCode::MissingInput, "question " + qid + " is not in the bank");
        require_file(path, "labels for " + qid);
        const auto data = load_labeled_tsv(path);
        const double acc = qa_accuracy(answerer, data, bank[*j]);
        sum += acc;
        csv << qid << ',' << fs::path(path).filename().string() << ',' << data.size() << ',' << acc << '\n';
    }
    csv << "MEAN,," << tasks.size() << ',' << sum / static_cast<double>(tasks.size()) << '\n';
    Emitter emit(cfg, "qa-accuracy");
    emit.set_bank(bank);
    emit.write(cfg.out, csv.str());
}

// ---------------------------------------------------------------------------
// synthgen

std::string rules_json(const RuleOracle::Rules& rules)
{
    return RuleOracle(rules).to_json().dump(2) + "\n";
}

void synth_encoding(const Emitter& emit, const fs::path& dir, std::optional<std::uint64_t> seed)
{
    fs::create_directories(dir);
    synth::EncodingSpec spec;
    if (seed) {
        spec.seed = *seed;
    }
    const auto inst = synth::make_encoding(spec);
    save_story(inst.story, (dir / "story.jsonl").string(), (dir / "tr.json").string());
    emit.sidecar(dir / "story.jsonl");
    emit.sidecar(dir / "tr.json");
    emit.write(dir / "bank.jsonl", to_jsonl(inst.bank));
    emit.write(dir / "rules.json", rules_json(inst.rules));
    emit.matrix(dir / "responses.mat", inst.responses);
    emit.matrix(dir / "oracle_features.mat", inst.features);
    emit.json(dir / "truth.json", {{"relevant", inst.relevant},
                                   {"train_trs", inst.n_train},
                                   {"true_delays", spec.true_delays},
                                   {"snr", spec.snr},
                                   {"seed", spec.seed}});
}

void synth_retrieval(const Emitter& emit, const fs::path& dir, std::optional<std::uint64_t> seed)
{
    fs::create_directories(dir);
    synth::RetrievalSpec spec;
    if (seed) {
        spec.seed = *seed;
    }
    const auto inst = synth::make_retrieval(spec);
    auto tsv = [](const std::vector<std::pair<std::string, std::string>>& rows) {
        std::string s;
        for (const auto& [a, b] : rows) {
            s += a + "\t" + b + "\n";
        }
        return s;
    };
    std::vector<std::pair<std::string, std::string>> qrels;
    for (const auto& [q, docs] : inst.qrels) {
        for (const auto& d : docs) {
            qrels.emplace_back(q, d);
        }
    }
    emit.write(dir / "corpus.tsv", tsv(inst.docs));
    emit.write(dir / "queries.tsv", tsv(inst.queries));
    emit.write(dir / "qrels.tsv", tsv(qrels));
    emit.write(dir / "bank.jsonl", to_jsonl(inst.query_bank));
    emit.write(dir / "rules.json", rules_json(inst.rules));
    emit.json(dir / "truth.json", {{"informative", inst.informative}, {"seed", spec.seed}});
}

void synth_clustering(const Emitter& emit, const fs::path& dir, std::optional<std::uint64_t> seed)
{
    fs::create_directories(dir);
    synth::ClusteringSpec spec;
    if (seed) {
        spec.seed = *seed;
    }
    const auto inst = synth::make_clustering(spec);
    emit.write(dir / "bank.jsonl", to_jsonl(inst.general));
    emit.write(dir / "rules.json", rules_json(inst.rules));
    synth::TopicPruneClient pruner(inst.task_topics);
    ojson manifest = ojson::array();
    for (const auto& ds : inst.datasets) {
        std::string tsv;
        for (const auto& e : ds.examples) {
            tsv += std::to_string(e.label) + "\t" + e.text + "\n";
        }
        emit.write(dir / (ds.name + ".tsv"), tsv);
        emit.write(dir / (ds.name + ".pruned.jsonl"), to_jsonl(prune_with_llm(inst.general, ds.task_description, pruner)));
        manifest.push_back({{"name", ds.name},
                            {"path", ds.name + ".tsv"},
                            {"task", ds.task_description},
                            {"pruned_bank", ds.name + ".pruned.jsonl"}});
    }
    emit.json(dir / "manifest.json", manifest);
}

void synth_distill(const Emitter& emit, const fs::path& dir, std::optional<std::uint64_t> seed)
{
    fs::create_directories(dir);
    synth::DistillSpec spec;
    if (seed) {
        spec.seed = *seed;
    }
    const auto inst = synth::make_distill(spec);
    emit.write(dir / "texts.txt", text::join(inst.texts, "\n") + "\n");
    emit.write(dir / "bank.jsonl", to_jsonl(inst.bank));
    emit.write(dir / "rules.json", rules_json(inst.rules));
}

void cmd_synthgen(const CommonFlags& f, const std::string& kind, std::optional<std::uint64_t> seed)
{
    const auto cfg = resolve_config(f);
    const fs::path out(cfg.out);
    Emitter emit(cfg, "synthgen");
    emit.set_extra({{"kind", kind}, {"synth_seed", seed ? ojson(*seed) : ojson(nullptr)}});
    const bool all = kind == "all";
    if (all || kind == "encoding") {
        synth_encoding(emit, all ? out / "encoding" : out, seed);
    }
    if (all || kind == "retrieval") {
        synth_retrieval(emit, all ? out / "retrieval" : out, seed);
    }
    if (all || kind == "clustering") {
        synth_clustering(emit, all ? out / "clustering" : out, seed);
    }
    if (all || kind == "distill") {
        synth_distill(emit, all ? out / "distill" : out, seed);
    }
}

void print_error(const std::string& command, std::string_view code, const std::string& message)
{
    ojson rec = {{"error", std::string(code)}, {"command", command}, {"message", message}};
    std::cerr << rec.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Interpretable text embeddings from yes/no question answering."};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CommonFlags common;
    FeatureSource src;
    std::string texts;
    std::string responses;
    std::string model;
    std::string task;
    std::string name = "generated";
    std::vector<std::string> prompts;
    std::vector<std::string> vars;
    std::vector<std::string> tasks;
    std::string corpus, queries, qrels, rewrites;
    std::string manifest;
    std::string prune_model;
    bool l2 = false;
    int train_trs = 0;
    std::string kind = "all";
    std::uint64_t synth_seed = 0;

    auto* gen = app.add_subcommand("generate-questions", "ask a model for question lists and merge them");
    add_common(gen, common, false, false);
    gen->add_option("--prompt", prompts, "generation prompt template; repeatable")->required();
    gen->add_option("--var", vars, "template variable as key=file; repeatable");
    gen->add_option("--model", model, "model id")->required();
    gen->add_option("--name", name, "bank name");

    auto* prune = app.add_subcommand("prune", "keep the questions a model deems relevant to a task");
    add_common(prune, common, false);
    prune->add_option("--task", task, "task description")->required();
    prune->add_option("--model", model, "model id")->required();

    auto* embed = app.add_subcommand("embed", "answer every question for every line of a text file");
    add_common(embed, common);
    embed->add_option("--texts", texts, "one text per line")->required();

    auto* fit = app.add_subcommand("fit-encoding", "fit a delayed ridge encoding model with bootstrap CV");
    add_common(fit, common);
    src.add(fit);
    fit->add_option("--responses", responses, "T x V response matrix")->required();
    fit->add_option("--train-trs", train_trs, "training TRs (default 80%)");

    auto* eval = app.add_subcommand("eval-encoding", "score a fitted model on the held-out TRs");
    add_common(eval, common);
    src.add(eval);
    eval->add_option("--model", model, "model directory written by fit-encoding")->required();
    eval->add_option("--responses", responses, "T x V response matrix")->required();
    eval->add_option("--train-trs", train_trs, "training TRs; the rest are scored (default 80%)");

    auto* sel = app.add_subcommand("select", "multi-task elastic-net path and pruning curve");
    add_common(sel, common);
    src.add(sel);
    sel->add_option("--responses", responses, "T x V response matrix")->required();
    sel->add_option("--train-trs", train_trs, "training TRs (default 80%)");

    auto* ret = app.add_subcommand("retrieve", "BM-25, QA-Emb and fused retrieval with learned scalars");
    add_common(ret, common);
    ret->add_option("--corpus", corpus, "doc_id<TAB>text")->required();
    ret->add_option("--queries", queries, "query_id<TAB>text")->required();
    ret->add_option("--qrels", qrels, "query_id<TAB>doc_id")->required();
    ret->add_option("--rewrites", rewrites, "JSON rewrite rules producing the document-side bank");

    auto* clu = app.add_subcommand("cluster-score", "clustering scores before and after bank pruning");
    add_common(clu, common);
    clu->add_option("--manifest", manifest, "JSON list of {name, path, task, pruned_bank?}")->required();
    clu->add_option("--prune-model", prune_model, "model used for datasets without a pruned bank");
    clu->add_flag("--l2-normalize", l2, "normalize embeddings before measuring distances");

    auto* dis = app.add_subcommand("distill", "train a multi-head student on teacher answers");
    add_common(dis, common);
    dis->add_option("--texts", texts, "training texts, one per line");
    src.add(dis);
    dis->add_option("--responses", responses, "responses for the encoding comparison (with --story)");
    dis->add_option("--train-trs", train_trs, "training TRs (default 80%)");

    auto* qa = app.add_subcommand("qa-accuracy", "answer accuracy against labeled yes/no datasets");
    add_common(qa, common);
    qa->add_option("--task", tasks, "question_id=labels.tsv; repeatable")->required();

    auto* syn = app.add_subcommand("synthgen", "write planted synthetic datasets");
    add_common(syn, common, false, false);
    syn->add_option("--kind", kind, "encoding, retrieval, clustering, distill or all")
        ->check(CLI::IsMember({"encoding", "retrieval", "clustering", "distill", "all"}));
    auto* o_synth_seed = syn->add_option("--synth-seed", synth_seed, "generator seed (default per kind)");

    CLI11_PARSE(app, argc, argv);

    const auto* chosen = app.get_subcommands().front();
    const std::string command = chosen->get_name();
    try {
        if (chosen == gen) {
            cmd_generate_questions(common, prompts, vars, model, name);
        } else if (chosen == prune) {
            cmd_prune(common, task, model);
        } else if (chosen == embed) {
            cmd_embed(common, texts);
        } else if (chosen == fit) {
            cmd_fit_encoding(common, src, responses, train_trs);
        } else if (chosen == eval) {
            cmd_eval_encoding(common, src, model, responses, train_trs);
        } else if (chosen == sel) {
            cmd_select(common, src, responses, train_trs);
        } else if (chosen == ret) {
            cmd_retrieve(common, corpus, queries, qrels, rewrites);
        } else if (chosen == clu) {
            cmd_cluster_score(common, manifest, prune_model, l2);
        } else if (chosen == dis) {
            cmd_distill(common, texts, src, responses, train_trs);
        } else if (chosen == qa) {
            cmd_qa_accuracy(common, tasks);
        } else if (chosen == syn) {
            cmd_synthgen(common, kind,
                         o_synth_seed->count() > 0 ? std::optional<std::uint64_t>(synth_seed) : std::nullopt);
        }
    } catch (const Error& e) {
        print_error(command, to_string(e.code()), e.message());
        return 2;
    } catch (const std::exception& e) {
        print_error(command, "InternalError", e.what());
        return 3;
    }
    return 0;
}
