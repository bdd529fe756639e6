#include "stereobias/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <CLI11.hpp>
#include <json.hpp>

#include "stereobias/audit.hpp"
#include "stereobias/corpus.hpp"
#include "stereobias/disagreement.hpp"
#include "stereobias/error.hpp"
#include "stereobias/glm.hpp"
#include "stereobias/io.hpp"
#include "stereobias/psychometrics.hpp"
#include "stereobias/simulate.hpp"
#include "stereobias/stereotype.hpp"
#include "stereobias/study.hpp"

namespace stereobias::cli {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

constexpr const char* kFixedEffectsNote =
    "multilevel structure approximated by fixed-effect cluster indicator columns";

struct Globals {
    std::uint64_t seed = 0;
    std::string out = "out";
    int threads = 1;
};

// Files are written under temporary names and renamed on commit; anything
// not committed is removed, along with the directory if this run created it.
class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        if (!fs::exists(dir_, ec)) {
            fs::create_directories(dir_, ec);
            if (ec) throw InvalidInput("cannot create output directory '" + dir_.string() + "': " + ec.message());
            created_ = true;
        } else if (!fs::is_directory(dir_, ec)) {
            throw InvalidInput("output path '" + dir_.string() + "' is not a directory");
        }
    }

    Outputs(const Outputs&) = delete;
    Outputs& operator=(const Outputs&) = delete;

    ~Outputs() {
        if (committed_) return;
        std::error_code ec;
        for (auto& file : files_) {
            file.stream.reset();
            fs::remove(staging(file.name), ec);
        }
        if (created_ && fs::is_empty(dir_, ec)) fs::remove(dir_, ec);
    }

    std::ostream& open(const std::string& name) {
        auto stream = std::make_unique<std::ofstream>(staging(name), std::ios::binary | std::ios::trunc);
        if (!*stream) throw InvalidInput("cannot write '" + (dir_ / name).string() + "'");
        files_.push_back({name, std::move(stream)});
        return *files_.back().stream;
    }

    void write_json(const std::string& name, const Json& value) { open(name) << value.dump(2) << '\n'; }

    void commit() {
        for (auto& file : files_) {
            file.stream->flush();
            if (!*file.stream) throw std::runtime_error("failed writing '" + (dir_ / file.name).string() + "'");
            file.stream.reset();
        }
        for (const auto& file : files_) fs::rename(staging(file.name), dir_ / file.name);
        committed_ = true;
    }

private:
    struct File {
        std::string name;
        std::unique_ptr<std::ofstream> stream;
    };

    fs::path staging(const std::string& name) const { return dir_ / (name + ".partial"); }

    fs::path dir_;
    std::vector<File> files_;
    bool created_ = false;
    bool committed_ = false;
};

Json number(double value) { return std::isfinite(value) ? Json(value) : Json(nullptr); }

Json vector_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(number(v(i)));
    return out;
}

Json typed(const std::string& value) {
    if (const auto i = io::parse_int(value); i && io::trim(value) == value) return *i;
    if (const auto d = io::parse_double(value); d && io::trim(value) == value) return number(*d);
    return value;
}

// Every option of the subcommand with its resolved value. The output
// directory is left out so reports do not depend on where they are written.
Json resolved_config(const CLI::App& sub, const Globals& globals) {
    Json options = Json::object();
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
        const std::string& name = opt->get_lnames().front();
        if (opt->get_expected_max() == 0) {
            options[name] = opt->count() > 0;
        } else if (opt->get_items_expected_max() > 1) {
            Json values = Json::array();
            for (const auto& v : opt->results()) values.push_back(typed(v));
            options[name] = std::move(values);
        } else {
            options[name] = typed(opt->count() > 0 ? opt->results().back() : opt->get_default_str());
        }
    }
    Json config = Json::object();
    config["command"] = sub.get_name();
    config["seed"] = globals.seed;
    config["threads"] = globals.threads;
    config["options"] = std::move(options);
    return config;
}

Json glm_json(const GlmFit& fit) {
    Json coefficients = Json::array();
    for (Eigen::Index k = 0; k < fit.beta.size(); ++k) {
        Json c = Json::object();
        c["name"] = fit.names[static_cast<std::size_t>(k)];
        c["estimate"] = number(fit.beta(k));
        c["standard_error"] = number(fit.standard_errors(k));
        c["z"] = number(fit.z_values(k));
        c["p"] = number(fit.p_values(k));
        c["percent_change"] = number(rate_ratio(fit.beta(k)));
        coefficients.push_back(std::move(c));
    }
    Json out = Json::object();
    out["family"] = family_name(fit.family);
    out["observations"] = fit.observations;
    out["coefficients"] = std::move(coefficients);
    out["deviance"] = number(fit.deviance);
    out["log_likelihood"] = number(fit.log_likelihood);
    out["dispersion"] = number(fit.dispersion);
    out["score_norm"] = number(fit.score_norm);
    out["iterations"] = fit.iterations;
    out["converged"] = fit.converged;
    out["diagnostic"] = fit.diagnostic;
    const GlmOptions defaults;
    out["deviance_tolerance"] = defaults.deviance_tolerance;
    out["max_iterations"] = defaults.max_iterations;
    return out;
}

void write_plot_stub(Outputs& outputs, const std::string& name, const std::string& csv, const std::string& x,
                     const std::string& y, const std::string& title) {
    outputs.open(name) << "# Plot stub; requires pandas and matplotlib.\n"
                          "import sys\n"
                          "import pandas as pd\n"
                          "import matplotlib.pyplot as plt\n\n"
                          "data = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else \""
                       << csv
                       << "\")\n"
                          "ax = data.plot.scatter(x=\""
                       << x << "\", y=\"" << y
                       << "\")\n"
                          "ax.set_title(\""
                       << title
                       << "\")\n"
                          "plt.tight_layout()\n"
                          "plt.savefig(\""
                       << fs::path(name).stem().string() << ".png\", dpi=150)\n";
}

std::vector<ExplicitComposite> load_composites(const std::string& survey_path, bool reverse_violence, Json* report) {
    const auto rows = load_survey(survey_path);
    auto result = explicit_composites(rows, reverse_violence);
    if (report != nullptr) {
        (*report)["survey_rows"] = rows.size();
        Json rejected = Json::array();
        for (const auto& r : result.rejected) rejected.push_back({{"row", r.index + 1}, {"reason", r.reason}});
        (*report)["survey_rejected"] = std::move(rejected);
    }
    return std::move(result.composites);
}

// ---- ingest ----------------------------------------------------------------

struct IngestOptions {
    std::string annotations;
    std::string posts;
    std::string lexicon;
};

void run_ingest(const IngestOptions& o, Json config, Outputs& outputs) {
    const auto annotations = load_annotations(o.annotations);
    Json summary = Json::object();
    summary["config"] = std::move(config);
    summary["records"] = annotations.size();
    summary["items"] = annotations.items().size();
    summary["annotators"] = annotations.annotators().size();

    auto& labels = outputs.open("majority_labels.csv");
    io::CsvWriter majority(labels);
    majority.row("item_id", "n1", "n0", "label", "tied");
    long long ties = 0;
    for (const auto& item : annotations.items()) {
        const auto c = annotations.counts(item);
        const auto vote = majority_vote(c.n1, c.n0, item);
        ties += vote.tied ? 1 : 0;
        majority.row(item, c.n1, c.n0, vote.label, vote.tied);
    }
    summary["ties"] = ties;

    if (!o.posts.empty()) {
        const auto posts = load_posts(o.posts);
        summary["posts"] = posts.size();
        long long missing = 0;
        for (const auto& item : annotations.items()) missing += posts.contains(item) ? 0 : 1;
        summary["annotated_items_without_post"] = missing;
        if (!o.lexicon.empty()) {
            const auto lexicon = load_lexicon(o.lexicon);
            const auto mentions = match_corpus(posts, lexicon);
            auto& file = outputs.open("mentions.csv");
            io::CsvWriter writer(file);
            writer.row("item_id", "group_id", "surface_form", "token_offset");
            std::unordered_map<std::string, std::unordered_set<std::string>> items_per_group;
            for (const auto& m : mentions) {
                writer.row(m.item_id, m.group_id, m.surface_form, m.token_offset);
                items_per_group[m.group_id].insert(m.item_id);
            }
            Json groups = Json::object();
            for (const auto& g : lexicon.groups()) groups[g] = items_per_group[g].size();
            summary["mentions"] = mentions.size();
            summary["items_mentioning_group"] = std::move(groups);
        }
    }
    outputs.write_json("ingest_summary.json", summary);
}

// ---- disagree --------------------------------------------------------------

struct DisagreeOptions {
    std::string annotations;
    std::string posts;
    std::string lexicon;
    std::string survey;
    long long permutations = 5000;
    bool no_reverse_violence = false;
};

void run_disagree(const DisagreeOptions& o, const Globals& g, Json config, Outputs& outputs) {
    const auto annotations = load_annotations(o.annotations);
    Json report = Json::object();
    report["config"] = std::move(config);

    std::vector<double> hate_d;
    std::vector<double> other_d;
    std::unordered_map<std::string, double> item_d;
    std::unordered_map<std::string, int> item_majority;
    {
        auto& file = outputs.open("item_disagreement.csv");
        io::CsvWriter writer(file);
        writer.row("item_id", "n1", "n0", "d");
        long long skipped = 0;
        for (const auto& item : annotations.items()) {
            const auto c = annotations.counts(item);
            if (c.total() < 2) {
                ++skipped;
                continue;
            }
            const double d = item_disagreement(c.n1, c.n0);
            writer.row(item, c.n1, c.n0, d);
            item_d.emplace(item, d);
            const auto vote = majority_vote(c.n1, c.n0, item);
            if (vote.tied) continue;
            item_majority.emplace(item, vote.label);
            (vote.label == 1 ? hate_d : other_d).push_back(d);
        }
        report["items_with_fewer_than_two_ratings"] = skipped;
    }
    {
        auto& file = outputs.open("participant_disagreement.csv");
        io::CsvWriter writer(file);
        writer.row("participant_id", "item_id", "d", "comparisons");
        for (const auto& p : participant_disagreements(annotations))
            writer.row(p.participant_id, p.item_id, p.d, p.comparisons);
    }

    const CountMatrix counts = label_count_table(annotations);
    Json agreement = Json::object();
    try {
        const auto kappa = fleiss_kappa_detail(counts);
        agreement["fleiss_kappa"] = number(kappa.kappa);
        agreement["kappa_raters_per_item"] = kappa.raters;
        agreement["kappa_items_used"] = kappa.items_used;
        agreement["kappa_items_dropped"] = kappa.items_dropped;
    } catch (const Undefined& e) {
        agreement["fleiss_kappa"] = nullptr;
        agreement["kappa_error"] = e.what();
    }
    agreement["pabak"] = number(pabak(counts));
    agreement["mean_observed_agreement"] = number(mean_observed_agreement(counts));
    agreement["items"] = counts.rows();
    report["agreement"] = std::move(agreement);

    Json contrast = Json::object();
    contrast["majority_hate_items"] = hate_d.size();
    contrast["majority_non_hate_items"] = other_d.size();
    if (!hate_d.empty() && !other_d.empty()) {
        const auto mean = [](const std::vector<double>& v) {
            double s = 0.0;
            for (const double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        contrast["mean_d_majority_hate"] = number(mean(hate_d));
        contrast["mean_d_majority_non_hate"] = number(mean(other_d));
        const auto test =
            permutation_test(hate_d, other_d, PermutationStatistic::MeanDifference, o.permutations, g.seed);
        contrast["statistic"] = "mean difference";
        contrast["observed"] = number(test.observed);
        contrast["p_value"] = number(test.p_value);
        contrast["arrangements"] = test.arrangements;
        contrast["exhaustive"] = test.exhaustive;
    }
    report["majority_contrast"] = std::move(contrast);

    if (!o.posts.empty() && !o.lexicon.empty()) {
        const auto posts = load_posts(o.posts);
        const auto lexicon = load_lexicon(o.lexicon);
        std::unordered_set<std::string> mentioning;
        for (const auto& m : match_corpus(posts, lexicon)) mentioning.insert(m.item_id);
        std::vector<double> y;
        std::vector<int> hate;
        std::vector<int> mentions;
        for (const auto& item : annotations.items()) {
            const auto d = item_d.find(item);
            const auto label = item_majority.find(item);
            if (d == item_d.end() || label == item_majority.end() || !posts.contains(item)) continue;
            y.push_back(d->second);
            hate.push_back(label->second);
            mentions.push_back(mentioning.contains(item) ? 1 : 0);
        }
        Json anova = Json::object();
        anova["response"] = "d";
        anova["factor_a"] = "majority_hate";
        anova["factor_b"] = "mentions_group";
        try {
            Json rows = Json::array();
            for (const auto& row : two_way_anova(y, hate, mentions))
                rows.push_back({{"source", row.source},
                                {"sum_of_squares", number(row.sum_of_squares)},
                                {"df", number(row.df)},
                                {"f", number(row.f)},
                                {"p", number(row.p)}});
            anova["rows"] = std::move(rows);
        } catch (const InvalidInput& e) {
            anova["error"] = e.what();
        }
        report["anova"] = std::move(anova);

        if (!o.survey.empty()) {
            const auto composites = load_composites(o.survey, !o.no_reverse_violence, &report);
            const auto table = participant_group_table(annotations, posts, lexicon, composites);
            auto& file = outputs.open("participant_group.csv");
            io::CsvWriter writer(file);
            writer.row("participant_id", "group_id", "n_items", "hate_count", "disagreement", "comparisons", "warmth",
                       "competence");
            for (const auto& r : table)
                writer.row(r.participant_id, r.group_id, r.n_items, r.hate_count, r.disagreement, r.comparisons,
                           r.warmth, r.competence);
            report["participant_group_rows"] = table.size();
        }
    }
    outputs.write_json("agreement.json", report);
    write_plot_stub(outputs, "plot_disagreement.py", "item_disagreement.csv", "n1", "d",
                    "Item disagreement by hate votes");
}

// ---- rasch -----------------------------------------------------------------

struct RaschCliOptions {
    std::string input;
    double tolerance = 1e-8;
    int max_iterations = 500;
};

void run_rasch(const RaschCliOptions& o, Json config, Outputs& outputs) {
    const auto matrix = load_response_matrix(o.input);
    RaschOptions options;
    options.gradient_tolerance = o.tolerance;
    options.max_iterations = o.max_iterations;
    const auto fit = fit_rasch_cml(matrix, options);
    const auto tendencies = estimate_tendencies(matrix, fit.difficulties);

    {
        auto& file = outputs.open("difficulties.csv");
        io::CsvWriter writer(file);
        writer.row("item_id", "difficulty", "standard_error");
        for (Eigen::Index j = 0; j < fit.difficulties.size(); ++j)
            writer.row(fit.item_ids[static_cast<std::size_t>(j)], fit.difficulties(j), fit.standard_errors(j));
    }
    long long extremal = 0;
    {
        auto& file = outputs.open("tendencies.csv");
        io::CsvWriter writer(file);
        writer.row("person_id", "raw_score", "answered", "theta", "standard_error", "extremal", "estimable");
        for (const auto& t : tendencies) {
            extremal += t.extremal ? 1 : 0;
            writer.row(t.person_id, t.raw_score, t.answered, t.theta, t.standard_error, t.extremal, t.estimable);
        }
    }
    Json report = Json::object();
    report["config"] = std::move(config);
    report["persons"] = matrix.persons();
    report["items"] = matrix.items();
    report["complete"] = matrix.complete();
    report["informative_persons"] = fit.informative_persons;
    report["excluded_persons"] = fit.excluded_persons.size();
    report["extremal_persons"] = extremal;
    report["converged"] = fit.converged;
    report["iterations"] = fit.iterations;
    report["max_abs_gradient"] = number(fit.max_abs_gradient);
    report["log_conditional_likelihood"] = number(fit.log_conditional_likelihood);
    report["identification"] = "difficulties sum to zero";
    outputs.write_json("rasch_report.json", report);
}

// ---- stereotype ------------------------------------------------------------

struct StereotypeOptions {
    std::string embeddings;
    std::string warmth;
    std::string competence;
    std::string lexicon;
    std::string survey;
    bool no_reverse_violence = false;
};

void run_stereotype(const StereotypeOptions& o, Json config, Outputs& outputs) {
    Json report = Json::object();
    report["config"] = std::move(config);
    if (!o.embeddings.empty()) {
        if (o.warmth.empty() || o.competence.empty() || o.lexicon.empty())
            throw InvalidInput("--embeddings needs --warmth, --competence and --lexicon");
        EmbeddingLoadReport load;
        const auto table = load_embeddings(o.embeddings, &load);
        const auto warmth = load_dictionary(o.warmth, "warmth");
        const auto competence = load_dictionary(o.competence, "competence");
        const auto lexicon = load_lexicon(o.lexicon);
        const auto scoring = score_groups(lexicon, warmth, competence, table);

        auto& file = outputs.open("stereotype_scores.csv");
        io::CsvWriter writer(file);
        writer.row("group_id", "warmth", "competence", "warmth_coverage", "competence_coverage");
        for (const auto& s : scoring.scores)
            writer.row(s.group_id, s.warmth, s.competence, s.warmth_coverage, s.competence_coverage);
        auto& failures = outputs.open("stereotype_failures.csv");
        io::CsvWriter failure_writer(failures);
        failure_writer.row("group_id", "surface_form", "reason");
        for (const auto& f : scoring.failures) failure_writer.row(f.group_id, f.surface_form, f.reason);

        report["embeddings"] = {{"loaded", load.loaded},
                                {"dimension", table.dimension()},
                                {"skipped_lines", load.skipped},
                                {"duplicates", load.duplicates},
                                {"header_skipped", load.header_skipped}};
        report["dictionary_sizes"] = {{"warmth", warmth.words.size()}, {"competence", competence.words.size()}};
        report["groups_scored"] = scoring.scores.size();
        report["groups_failed"] = scoring.failures.size();
        write_plot_stub(outputs, "plot_stereotype.py", "stereotype_scores.csv", "warmth", "competence",
                        "Group warmth and competence");
    }
    if (!o.survey.empty()) {
        const auto rows = load_survey(o.survey);
        const auto result = explicit_composites(rows, !o.no_reverse_violence);
        auto& file = outputs.open("explicit_composites.csv");
        io::CsvWriter writer(file);
        writer.row("participant_id", "group_id", "warmth", "competence");
        for (const auto& c : result.composites) writer.row(c.participant_id, c.group_id, c.warmth, c.competence);

        Json rejected = Json::array();
        for (const auto& r : result.rejected) rejected.push_back({{"row", r.index + 1}, {"reason", r.reason}});
        std::unordered_set<std::size_t> bad;
        for (const auto& r : result.rejected) bad.insert(r.index);
        Eigen::MatrixXd traits(static_cast<Eigen::Index>(rows.size() - bad.size()), 3);
        Eigen::Index n = 0;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (bad.contains(i)) continue;
            const double violence =
                o.no_reverse_violence ? rows[i].violence : (kScaleMin + kScaleMax) - rows[i].violence;
            traits.row(n++) << rows[i].friendliness, rows[i].helpfulness, violence;
        }
        Json survey = Json::object();
        survey["rows"] = rows.size();
        survey["composites"] = result.composites.size();
        survey["rejected"] = std::move(rejected);
        try {
            survey["warmth_alpha"] = number(cronbach_alpha(traits));
        } catch (const std::exception& e) {
            survey["warmth_alpha"] = nullptr;
            survey["warmth_alpha_error"] = e.what();
        }
        report["survey"] = std::move(survey);
    }
    if (o.embeddings.empty() && o.survey.empty()) throw InvalidInput("stereotype needs --embeddings or --survey");
    outputs.write_json("stereotype_report.json", report);
}

// ---- associate -------------------------------------------------------------

struct AssociateOptions {
    std::string input;
    std::string model;
    std::string family = "poisson";
    std::string offset;
    std::string exposure;
    std::string weights;
    std::vector<std::string> clusters;
};

struct ModelSpec {
    std::string response;
    std::vector<std::string> terms;
    bool intercept = true;
};

ModelSpec parse_model(const std::string& text) {
    const auto tilde = text.find('~');
    if (tilde == std::string::npos) throw InvalidInput("model '" + text + "' lacks '~'");
    ModelSpec spec;
    spec.response = std::string(io::trim(std::string_view(text).substr(0, tilde)));
    if (spec.response.empty()) throw InvalidInput("model '" + text + "' has no response");
    std::string_view rhs = std::string_view(text).substr(tilde + 1);
    std::size_t start = 0;
    bool negate = false;
    for (std::size_t pos = 0; pos <= rhs.size(); ++pos) {
        if (pos < rhs.size() && rhs[pos] != '+' && rhs[pos] != '-') continue;
        const auto term = io::trim(rhs.substr(start, pos - start));
        if (term == "0" || (negate && term == "1")) {
            spec.intercept = false;
        } else if (term == "1") {
            spec.intercept = true;
        } else if (!term.empty()) {
            if (negate) throw InvalidInput("model '" + text + "' removes a term other than the intercept");
            if (std::find(spec.terms.begin(), spec.terms.end(), term) != spec.terms.end())
                throw InvalidInput("model '" + text + "' repeats term '" + std::string(term) + "'");
            spec.terms.emplace_back(term);
        } else if (pos < rhs.size() && negate) {
            throw InvalidInput("model '" + text + "' has an empty term");
        }
        negate = pos < rhs.size() && rhs[pos] == '-';
        start = pos + 1;
    }
    if (spec.terms.empty() && !spec.intercept) throw InvalidInput("model '" + text + "' has no terms");
    return spec;
}

bool is_missing(std::string_view v) {
    v = io::trim(v);
    return v.empty() || v == "NA" || v == "nan" || v == "NaN";
}

void run_associate(const AssociateOptions& o, Json config, Outputs& outputs) {
    const ModelSpec spec = parse_model(o.model);
    const Family family = parse_family(o.family);
    if (!o.offset.empty() && !o.exposure.empty()) throw InvalidInput("give either --offset or --exposure, not both");

    const auto rows = io::read_csv(o.input);
    if (rows.empty()) throw ParseError(o.input, 0, "missing header row");
    const auto& header = rows.front().fields;
    auto column = [&](const std::string& name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (io::trim(header[c]) == name) return c;
        throw ParseError(o.input, rows.front().line, "no column named '" + name + "'");
    };

    std::vector<std::string> numeric = {spec.response};
    numeric.insert(numeric.end(), spec.terms.begin(), spec.terms.end());
    const std::string offset_name = !o.offset.empty() ? o.offset : o.exposure;
    if (!offset_name.empty()) numeric.push_back(offset_name);
    if (!o.weights.empty()) numeric.push_back(o.weights);
    std::vector<std::size_t> numeric_col;
    for (const auto& name : numeric) numeric_col.push_back(column(name));
    std::vector<std::size_t> cluster_col;
    for (const auto& name : o.clusters) cluster_col.push_back(column(name));

    std::vector<std::vector<double>> values(numeric.size());
    std::vector<std::vector<std::string>> cluster_values(o.clusters.size());
    long long dropped = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(o.input, row.line, "expected " + std::to_string(header.size()) + " fields");
        bool missing = false;
        for (const auto c : numeric_col) missing = missing || is_missing(row.fields[c]);
        for (const auto c : cluster_col) missing = missing || is_missing(row.fields[c]);
        if (missing) {
            ++dropped;
            continue;
        }
        for (std::size_t k = 0; k < numeric_col.size(); ++k) {
            const auto v = io::parse_double(row.fields[numeric_col[k]]);
            if (!v || !std::isfinite(*v))
                throw ParseError(o.input, row.line, "column '" + numeric[k] + "' is not numeric");
            values[k].push_back(*v);
        }
        for (std::size_t k = 0; k < cluster_col.size(); ++k)
            cluster_values[k].emplace_back(io::trim(row.fields[cluster_col[k]]));
    }
    const auto n = static_cast<Eigen::Index>(values.front().size());
    if (n == 0) throw InvalidInput("no complete rows in '" + o.input + "'");
    auto vec = [&](std::size_t k) { return Eigen::Map<const Eigen::VectorXd>(values[k].data(), n); };

    DesignMatrix design;
    if (spec.intercept) {
        design = DesignMatrix::intercept_only(n);
    } else {
        design.x.resize(n, 0);
    }
    for (std::size_t t = 0; t < spec.terms.size(); ++t) design.add_column(spec.terms[t], vec(t + 1));
    for (std::size_t k = 0; k < o.clusters.size(); ++k) {
        const auto dummies = cluster_dummies(cluster_values[k], o.clusters[k]);
        design.add_columns(dummies.columns, dummies.names);
    }
    std::size_t next = spec.terms.size() + 1;
    if (!offset_name.empty()) {
        Eigen::VectorXd offset = vec(next++);
        if (!o.exposure.empty()) {
            if ((offset.array() <= 0.0).any()) throw InvalidInput("exposure column must be positive");
            offset = offset.array().log();
        }
        design.offset = std::move(offset);
    }
    GlmOptions options;
    if (!o.weights.empty()) options.weights = vec(next++);
    const GlmFit fit = fit_glm(design, vec(0), family, options);

    Json report = Json::object();
    report["config"] = std::move(config);
    report["response"] = spec.response;
    report["rows_used"] = n;
    report["rows_dropped_missing"] = dropped;
    report["fit"] = glm_json(fit);
    if (!o.clusters.empty()) report["note"] = kFixedEffectsNote;
    outputs.write_json("glm_report.json", report);

    auto& file = outputs.open("coefficients.csv");
    io::CsvWriter writer(file);
    writer.row("term", "estimate", "standard_error", "z", "p", "percent_change");
    for (Eigen::Index k = 0; k < fit.beta.size(); ++k)
        writer.row(fit.names[static_cast<std::size_t>(k)], fit.beta(k), fit.standard_errors(k), fit.z_values(k),
                   fit.p_values(k), rate_ratio(fit.beta(k)));
}

// ---- audit -----------------------------------------------------------------

struct AuditOptions {
    std::string posts;
    std::string annotations;
    std::string lexicon;
    std::string embeddings;
    std::string predictions;
    std::string scores;
    std::string warmth;
    std::string competence;
    double train_fraction = 0.8;
    int iterations = 100;
    double ridge = 1.0;
    bool include_ties = false;
    std::string denominator = "class";
};

std::vector<StereotypeScore> load_scores(const std::string& path) {
    const auto rows = io::read_csv(path);
    if (rows.empty()) throw ParseError(path, 0, "missing header row");
    const auto& header = rows.front().fields;
    auto column = [&](std::string_view name) {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (io::trim(header[c]) == name) return c;
        throw ParseError(path, rows.front().line, "no column named '" + std::string(name) + "'");
    };
    const auto group = column("group_id");
    const auto warmth = column("warmth");
    const auto competence = column("competence");
    std::vector<StereotypeScore> out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(path, row.line, "expected " + std::to_string(header.size()) + " fields");
        StereotypeScore s;
        s.group_id = std::string(io::trim(row.fields[group]));
        const auto w = io::parse_double(row.fields[warmth]);
        const auto c = io::parse_double(row.fields[competence]);
        if (!w || !c) throw ParseError(path, row.line, "warmth and competence must be numeric");
        s.warmth = *w;
        s.competence = *c;
        out.push_back(std::move(s));
    }
    return out;
}

void run_audit(const AuditOptions& o, const Globals& g, Json config, Outputs& outputs) {
    RatioDenominator denominator;
    if (o.denominator == "class") {
        denominator = RatioDenominator::ClassConditional;
    } else if (o.denominator == "total") {
        denominator = RatioDenominator::Total;
    } else {
        throw InvalidInput("--denominator must be 'class' or 'total'");
    }
    const auto posts = load_posts(o.posts);
    const auto lexicon = load_lexicon(o.lexicon);
    const MentionIndex mentions(posts, lexicon);

    std::optional<EmbeddingTable> table;
    if (!o.embeddings.empty()) table = load_embeddings(o.embeddings);

    std::vector<StereotypeScore> scores;
    if (!o.scores.empty()) {
        scores = load_scores(o.scores);
    } else {
        if (!table || o.warmth.empty() || o.competence.empty())
            throw InvalidInput("audit needs --scores, or --embeddings with --warmth and --competence");
        scores = score_groups(lexicon, load_dictionary(o.warmth, "warmth"), load_dictionary(o.competence, "competence"),
                              *table)
                     .scores;
    }

    Json report = Json::object();
    report["config"] = std::move(config);
    std::vector<PredictionRecord> predictions;
    if (!o.predictions.empty()) {
        predictions = load_predictions(o.predictions);
        report["source"] = "external predictions";
    } else {
        if (o.annotations.empty() || !table)
            throw InvalidInput("the internal baseline needs --annotations and --embeddings");
        const auto annotations = load_annotations(o.annotations);
        AuditConfig audit;
        audit.train_fraction = o.train_fraction;
        audit.iterations = o.iterations;
        audit.seed = g.seed;
        audit.include_ties = o.include_ties;
        audit.threads = g.threads;
        audit.baseline.ridge = o.ridge;
        audit.denominator = denominator;
        AuditRun run = run_baseline_audit(posts, annotations, *table, audit);
        predictions = std::move(run.predictions);
        report["source"] = "ridge logistic baseline on mean embeddings";
        report["items"] = run.data.item_ids.size();
        report["ties_excluded"] = run.data.ties_excluded;
        report["converged_iterations"] =
            std::count(run.converged_iterations.begin(), run.converged_iterations.end(), 1);
        auto& file = outputs.open("predictions.csv");
        io::CsvWriter writer(file);
        writer.row("iteration", "item_id", "predicted", "majority");
        for (const auto& p : predictions) writer.row(p.iteration, p.item_id, p.predicted, p.majority);
    }
    report["predictions"] = predictions.size();

    const auto stats = tally_errors(predictions, mentions, denominator);
    {
        auto& file = outputs.open("sgt_error_stats.csv");
        io::CsvWriter writer(file);
        writer.row("group_id", "n_total", "n_neg", "n_pos", "n_fp", "n_fn", "fp_ratio", "fn_ratio");
        for (const auto& s : stats)
            writer.row(s.group_id, s.n_total, s.n_neg, s.n_pos, s.n_fp, s.n_fn, s.fp_ratio, s.fn_ratio);
    }

    Json models = Json::array();
    for (const auto kind : {ErrorKind::FalsePositive, ErrorKind::FalseNegative}) {
        for (const auto predictor : {StereotypePredictor::Warmth, StereotypePredictor::Competence}) {
            Json entry = Json::object();
            entry["error"] = to_string(kind);
            entry["predictor"] = to_string(predictor);
            try {
                entry["fit"] = glm_json(associate_bias(stats, scores, kind, predictor));
            } catch (const InvalidInput& e) {
                entry["fit"] = nullptr;
                entry["failure"] = e.what();
            }
            models.push_back(std::move(entry));
        }
    }
    report["models"] = std::move(models);
    outputs.write_json("bias_association.json", report);
    write_plot_stub(outputs, "plot_audit.py", "sgt_error_stats.csv", "fp_ratio", "fn_ratio",
                    "Per-group error ratios");
}

// ---- simulate --------------------------------------------------------------

struct SimulateOptions {
    std::string scenario = "study";
    SimConfig study;
    AuditSimConfig audit;
    int persons = 500;
    int items = 30;
};

void write_posts(Outputs& outputs, const PostTable& posts) {
    auto& file = outputs.open("posts.jsonl");
    for (const auto& post : posts) file << Json{{"id", post.id}, {"text", post.text}}.dump() << '\n';
}

void write_annotations(Outputs& outputs, const AnnotationSet& annotations) {
    auto& file = outputs.open("annotations.csv");
    io::CsvWriter writer(file);
    writer.row("item_id", "annotator_id", "label");
    for (const auto& r : annotations.records()) writer.row(r.item_id, r.annotator_id, r.label);
}

void write_lexicon(Outputs& outputs, const SgtLexicon& lexicon) {
    auto& file = outputs.open("lexicon.tsv");
    for (const auto& e : lexicon.entries()) file << e.group_id << '\t' << e.surface_form << '\n';
}

void write_responses(Outputs& outputs, const ResponseMatrix& m) {
    auto& file = outputs.open("responses.csv");
    io::CsvWriter writer(file);
    writer.field("person_id");
    for (const auto& item : m.item_ids) writer.field(item);
    writer.end_row();
    for (Eigen::Index p = 0; p < m.persons(); ++p) {
        writer.field(m.person_ids[static_cast<std::size_t>(p)]);
        for (Eigen::Index i = 0; i < m.items(); ++i) {
            const int v = m.values(p, i);
            if (v == ResponseMatrix::kMissing) {
                writer.field("NA");
            } else {
                writer.field(v);
            }
        }
        writer.end_row();
    }
}

void run_simulate(const SimulateOptions& o, const Globals& g, Json config, Outputs& outputs) {
    Json truth = Json::object();
    truth["config"] = std::move(config);
    if (o.scenario == "study") {
        const SimData data = simulate_annotations(o.study, g.seed);
        write_annotations(outputs, data.annotations);
        write_posts(outputs, data.posts);
        write_lexicon(outputs, data.lexicon);
        {
            auto& file = outputs.open("survey.csv");
            io::CsvWriter writer(file);
            writer.row("participant_id", "group_id", "friendliness", "helpfulness", "violence", "intelligence");
            for (const auto& r : data.survey)
                writer.row(r.participant_id, r.group_id, r.friendliness, r.helpfulness, r.violence, r.intelligence);
        }
        write_responses(outputs, data.responses);
        const SimTruth& t = data.truth;
        truth["participant_ids"] = t.participant_ids;
        truth["theta"] = vector_json(t.theta);
        truth["item_ids"] = t.item_ids;
        truth["delta"] = vector_json(t.delta);
        Json item_group = Json::array();
        for (const int gi : t.item_group) item_group.push_back(t.group_ids[static_cast<std::size_t>(gi)]);
        truth["item_group"] = std::move(item_group);
        truth["group_ids"] = t.group_ids;
        Json competence = Json::array();
        for (Eigen::Index p = 0; p < t.competence.rows(); ++p) competence.push_back(vector_json(t.competence.row(p).transpose()));
        truth["competence"] = std::move(competence);
        truth["rating_center"] = t.rating_center;
        truth["coefficients"] = {{"competence", t.competence_effect}};
    } else if (o.scenario == "audit") {
        const AuditSimulation sim = simulate_audit_corpus(o.audit, g.seed);
        write_annotations(outputs, sim.annotations);
        write_posts(outputs, sim.posts);
        write_lexicon(outputs, sim.lexicon);
        sim.embeddings.write(outputs.open("embeddings.txt"));
        auto& warmth = outputs.open("warmth.txt");
        for (const auto& w : sim.warmth.words) warmth << w << '\n';
        auto& competence = outputs.open("competence.txt");
        for (const auto& w : sim.competence.words) competence << w << '\n';
        truth["group_ids"] = sim.group_ids;
        truth["group_competence"] = vector_json(sim.group_competence);
        truth["group_warmth"] = vector_json(sim.group_warmth);
        truth["planted_effect"] = "false positives decrease with group competence";
    } else if (o.scenario == "rasch") {
        const RaschSimulation sim = simulate_rasch(o.persons, o.items, g.seed);
        write_responses(outputs, sim.responses);
        truth["participant_ids"] = sim.truth.participant_ids;
        truth["theta"] = vector_json(sim.truth.theta);
        truth["item_ids"] = sim.truth.item_ids;
        truth["delta"] = vector_json(sim.truth.delta);
    } else {
        throw InvalidInput("--scenario must be study, audit or rasch");
    }
    outputs.write_json("truth.json", truth);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Annotator stereotype and classifier bias analyses", "stereobias"};
    app.require_subcommand(1);
    app.fallthrough();
    app.option_defaults()->always_capture_default();

    Globals globals;
    app.add_option("--seed", globals.seed, "Seed for every random draw");
    app.add_option("--out", globals.out, "Output directory");
    app.add_option("--threads", globals.threads, "Worker cap")->check(CLI::PositiveNumber);
    app.set_config("--config", "", "key = value file; command-line flags take precedence");
    app.allow_config_extras(CLI::config_extras_mode::error);

    std::function<void(Outputs&)> action;

    IngestOptions ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Majority labels and group mentions");
    ingest_cmd->add_option("--annotations", ingest.annotations, "item_id,annotator_id,label CSV")
        ->required()
        ->check(CLI::ExistingFile);
    ingest_cmd->add_option("--posts", ingest.posts, "JSONL posts with id and text")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--lexicon", ingest.lexicon, "group_id<TAB>surface_form")->check(CLI::ExistingFile);
    ingest_cmd->callback([&] {
        action = [&](Outputs& o) { run_ingest(ingest, resolved_config(*ingest_cmd, globals), o); };
    });

    DisagreeOptions disagree;
    auto* disagree_cmd = app.add_subcommand("disagree", "Disagreement statistics and agreement");
    disagree_cmd->add_option("--annotations", disagree.annotations, "item_id,annotator_id,label CSV")
        ->required()
        ->check(CLI::ExistingFile);
    disagree_cmd->add_option("--posts", disagree.posts, "JSONL posts")->check(CLI::ExistingFile);
    disagree_cmd->add_option("--lexicon", disagree.lexicon, "Group lexicon")->check(CLI::ExistingFile);
    disagree_cmd->add_option("--survey", disagree.survey, "Explicit rating survey CSV")->check(CLI::ExistingFile);
    disagree_cmd->add_option("--permutations", disagree.permutations, "Permutations for the majority contrast")
        ->check(CLI::PositiveNumber);
    disagree_cmd->add_flag("--no-reverse-violence", disagree.no_reverse_violence,
                           "Average the raw violence rating into warmth");
    disagree_cmd->callback([&] {
        action = [&](Outputs& o) { run_disagree(disagree, globals, resolved_config(*disagree_cmd, globals), o); };
    });

    RaschCliOptions rasch;
    auto* rasch_cmd = app.add_subcommand("rasch", "Rasch item difficulties and person tendencies");
    rasch_cmd->add_option("--in", rasch.input, "Wide CSV: person_id then one 0/1 column per item")
        ->required()
        ->check(CLI::ExistingFile);
    rasch_cmd->add_option("--tolerance", rasch.tolerance, "Gradient tolerance")->check(CLI::PositiveNumber);
    rasch_cmd->add_option("--max-iterations", rasch.max_iterations, "Newton iteration cap")
        ->check(CLI::PositiveNumber);
    rasch_cmd->callback([&] {
        action = [&](Outputs& o) { run_rasch(rasch, resolved_config(*rasch_cmd, globals), o); };
    });

    StereotypeOptions stereotype;
    auto* stereotype_cmd = app.add_subcommand("stereotype", "Warmth and competence scores");
    stereotype_cmd->add_option("--embeddings", stereotype.embeddings, "Embedding text file")
        ->check(CLI::ExistingFile);
    stereotype_cmd->add_option("--warmth", stereotype.warmth, "Warmth dictionary")->check(CLI::ExistingFile);
    stereotype_cmd->add_option("--competence", stereotype.competence, "Competence dictionary")
        ->check(CLI::ExistingFile);
    stereotype_cmd->add_option("--lexicon", stereotype.lexicon, "Group lexicon")->check(CLI::ExistingFile);
    stereotype_cmd->add_option("--survey", stereotype.survey, "Explicit rating survey CSV")->check(CLI::ExistingFile);
    stereotype_cmd->add_flag("--no-reverse-violence", stereotype.no_reverse_violence,
                             "Average the raw violence rating into warmth");
    stereotype_cmd->callback([&] {
        action = [&](Outputs& o) { run_stereotype(stereotype, resolved_config(*stereotype_cmd, globals), o); };
    });

    AssociateOptions associate;
    auto* associate_cmd = app.add_subcommand("associate", "Generalized linear model on a CSV table");
    associate_cmd->add_option("--in", associate.input, "Input CSV")->required()->check(CLI::ExistingFile);
    associate_cmd->add_option("--model", associate.model, "\"response ~ a + b\"")->required();
    associate_cmd->add_option("--family", associate.family, "poisson, binomial or gaussian");
    associate_cmd->add_option("--offset", associate.offset, "Column added to the linear predictor");
    associate_cmd->add_option("--exposure", associate.exposure, "Column whose log is the offset");
    associate_cmd->add_option("--weights", associate.weights, "Prior weight column");
    associate_cmd->add_option("--cluster", associate.clusters, "Categorical column expanded to indicators");
    associate_cmd->callback([&] {
        action = [&](Outputs& o) { run_associate(associate, resolved_config(*associate_cmd, globals), o); };
    });

    AuditOptions audit;
    auto* audit_cmd = app.add_subcommand("audit", "Per-group classifier error audit");
    audit_cmd->add_option("--posts", audit.posts, "JSONL posts")->required()->check(CLI::ExistingFile);
    audit_cmd->add_option("--lexicon", audit.lexicon, "Group lexicon")->required()->check(CLI::ExistingFile);
    audit_cmd->add_option("--annotations", audit.annotations, "Annotations for majority labels")
        ->check(CLI::ExistingFile);
    audit_cmd->add_option("--embeddings", audit.embeddings, "Embedding text file")->check(CLI::ExistingFile);
    audit_cmd->add_option("--predictions", audit.predictions, "External iteration,item_id,predicted,majority CSV")
        ->check(CLI::ExistingFile);
    audit_cmd->add_option("--scores", audit.scores, "stereotype_scores.csv")->check(CLI::ExistingFile);
    audit_cmd->add_option("--warmth", audit.warmth, "Warmth dictionary")->check(CLI::ExistingFile);
    audit_cmd->add_option("--competence", audit.competence, "Competence dictionary")->check(CLI::ExistingFile);
    audit_cmd->add_option("--train-frac", audit.train_fraction, "Training share per split")
        ->check(CLI::Range(0.0, 1.0));
    audit_cmd->add_option("--iterations", audit.iterations, "Random splits")->check(CLI::PositiveNumber);
    audit_cmd->add_option("--ridge", audit.ridge, "L2 penalty of the baseline")->check(CLI::NonNegativeNumber);
    audit_cmd->add_flag("--include-ties", audit.include_ties, "Keep tied items with label 0");
    audit_cmd->add_option("--denominator", audit.denominator, "Error ratio denominator: class or total");
    audit_cmd->callback([&] {
        action = [&](Outputs& o) { run_audit(audit, globals, resolved_config(*audit_cmd, globals), o); };
    });

    SimulateOptions simulate;
    auto* simulate_cmd = app.add_subcommand("simulate", "Synthetic datasets with known effects");
    simulate_cmd->add_option("--scenario", simulate.scenario, "study, audit or rasch");
    simulate_cmd->add_option("--participants", simulate.study.n_participants, "Participants (study)");
    simulate_cmd->add_option("--groups", simulate.study.n_groups, "Groups (study)");
    simulate_cmd->add_option("--items-per-group", simulate.study.items_per_group, "Items per group (study)");
    simulate_cmd->add_option("--annotators-per-item", simulate.study.annotators_per_item,
                             "Annotators per item, 0 for all (study)");
    simulate_cmd->add_option("--effect", simulate.study.competence_effect,
                             "Logit shift per competence point (study)");
    simulate_cmd->add_option("--audit-items", simulate.audit.n_items, "Posts (audit)");
    simulate_cmd->add_option("--audit-groups", simulate.audit.n_groups, "Groups (audit)");
    simulate_cmd->add_option("--competence-shift", simulate.audit.competence_shift,
                             "Group competence loading on the hate axis (audit)");
    simulate_cmd->add_option("--persons", simulate.persons, "Persons (rasch)");
    simulate_cmd->add_option("--items", simulate.items, "Items (rasch)");
    simulate_cmd->callback([&] {
        action = [&](Outputs& o) { run_simulate(simulate, globals, resolved_config(*simulate_cmd, globals), o); };
    });

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion&) {
        out << "stereobias 1.0.0\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        const auto stray = app.remaining();
        if (app.get_subcommands().empty() && !stray.empty() && !stray.front().starts_with("-"))
            err << "error: unknown subcommand '" << stray.front() << "'\n";
        else
            err << "error: " << e.what() << '\n';
        if (const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front())
            err << sub->help();
        else
            err << app.help();
        return kExitInvalidInput;
    }

    try {
        Outputs outputs(globals.out);
        action(outputs);
        outputs.commit();
    } catch (const InvalidInput& e) {
        err << "error: " << e.what() << '\n';
        return kExitInvalidInput;
    } catch (const Undefined& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace stereobias::cli
