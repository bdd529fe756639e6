#include "stereobias/audit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "stereobias/error.hpp"
#include "stereobias/io.hpp"
#include "stereobias/random.hpp"

namespace stereobias {

SplitPlan make_splits(Eigen::Index n_items, double fraction, int iterations, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw InvalidInput("train fraction must lie strictly between 0 and 1");
    if (n_items < 2) throw InvalidInput("splitting needs at least two items");
    if (iterations < 1) throw InvalidInput("need at least one iteration");
    const auto n_train = static_cast<Eigen::Index>(std::llround(fraction * static_cast<double>(n_items)));
    if (n_train == 0 || n_train == n_items)
        throw InvalidInput("train fraction leaves an empty train or test set for " + std::to_string(n_items) + " items");

    SplitPlan plan;
    plan.seed = seed;
    plan.train_fraction = fraction;
    plan.n_items = n_items;
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_items));
    for (int it = 0; it < iterations; ++it) {
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(it));
        rng.shuffle(order);
        std::vector<Eigen::Index> train(order.begin(), order.begin() + n_train);
        std::vector<Eigen::Index> test(order.begin() + n_train, order.end());
        std::sort(train.begin(), train.end());
        std::sort(test.begin(), test.end());
        plan.train.push_back(std::move(train));
        plan.test.push_back(std::move(test));
    }
    return plan;
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path) {
    const std::string origin = path.string();
    const auto rows = io::read_csv(path);
    if (rows.empty()) throw ParseError(origin, 0, "missing header row");
    constexpr std::string_view names[4] = {"iteration", "item_id", "predicted", "majority"};
    const auto& header = rows.front().fields;
    std::size_t column[4];
    for (std::size_t k = 0; k < 4; ++k) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](const std::string& h) { return io::trim(h) == names[k]; });
        if (it == header.end())
            throw ParseError(origin, rows.front().line, "header lacks column '" + std::string(names[k]) + "'");
        column[k] = static_cast<std::size_t>(it - header.begin());
    }
    std::vector<PredictionRecord> out;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.fields.size() != header.size())
            throw ParseError(origin, row.line, "expected " + std::to_string(header.size()) + " fields");
        const auto iteration = io::parse_int(row.fields[column[0]]);
        if (!iteration || *iteration < 0) throw ParseError(origin, row.line, "iteration must be a non-negative integer");
        PredictionRecord record;
        record.iteration = static_cast<int>(*iteration);
        record.item_id = std::string(io::trim(row.fields[column[1]]));
        if (record.item_id.empty()) throw ParseError(origin, row.line, "empty item_id");
        for (std::size_t k = 2; k < 4; ++k) {
            const auto value = io::trim(row.fields[column[k]]);
            if (value != "0" && value != "1")
                throw ParseError(origin, row.line, std::string(names[k]) + " must be 0 or 1");
            (k == 2 ? record.predicted : record.majority) = value == "1" ? 1 : 0;
        }
        if (!seen.insert(std::to_string(record.iteration) + '\x1f' + record.item_id).second)
            throw ParseError(origin, row.line, "duplicate (iteration, item_id) pair");
        out.push_back(std::move(record));
    }
    return out;
}

Eigen::VectorXd text_features(std::string_view text, const EmbeddingTable& embeddings) {
    const auto tokens = tokenize(text);
    auto mean = embeddings.mean_vector(tokens);
    return mean ? std::move(*mean) : Eigen::VectorXd::Zero(embeddings.dimension());
}

BaselineModel train_baseline(const Eigen::Ref<const Eigen::MatrixXd>& features,
                             const Eigen::Ref<const Eigen::VectorXi>& labels, const BaselineOptions& options) {
    if (features.rows() != labels.size()) throw InvalidInput("feature rows and labels differ in length");
    const auto positives = (labels.array() == 1).count();
    const auto negatives = (labels.array() == 0).count();
    if (positives + negatives != labels.size()) throw InvalidInput("training labels must be 0 or 1");
    if (positives == 0 || negatives == 0) throw InvalidInput("training set needs examples of both classes");

    DesignMatrix design = DesignMatrix::intercept_only(features.rows());
    Eigen::MatrixXd x(features.rows(), features.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(features.cols()) = features;
    design.x = std::move(x);
    for (Eigen::Index d = 0; d < features.cols(); ++d) design.names.push_back("x" + std::to_string(d));

    GlmOptions glm;
    glm.ridge = options.ridge;
    glm.separation_bound = 1e6;
    const GlmFit fit = fit_glm(design, labels.cast<double>(), Family::Binomial, glm);

    BaselineModel model;
    model.bias = fit.beta(0);
    model.weights = fit.beta.tail(features.cols());
    model.ridge = options.ridge;
    model.iterations = fit.iterations;
    model.converged = fit.converged;
    return model;
}

BaselineModel train_baseline(std::span<const TrainingExample> examples, const EmbeddingTable& embeddings,
                             const BaselineOptions& options) {
    Eigen::MatrixXd features(static_cast<Eigen::Index>(examples.size()), embeddings.dimension());
    Eigen::VectorXi labels(static_cast<Eigen::Index>(examples.size()));
    for (std::size_t i = 0; i < examples.size(); ++i) {
        features.row(static_cast<Eigen::Index>(i)) = text_features(examples[i].text, embeddings).transpose();
        labels(static_cast<Eigen::Index>(i)) = examples[i].label;
    }
    return train_baseline(features, labels, options);
}

int predict_baseline(const BaselineModel& model, const Eigen::Ref<const Eigen::VectorXd>& features) {
    if (features.size() != model.weights.size()) throw InvalidInput("feature dimension does not match the model");
    return model.weights.dot(features) + model.bias >= 0.0 ? 1 : 0;
}

int predict_baseline(const BaselineModel& model, std::string_view text, const EmbeddingTable& embeddings) {
    return predict_baseline(model, text_features(text, embeddings));
}

MentionIndex::MentionIndex(const PostTable& posts, const SgtLexicon& lexicon) {
    group_order_ = lexicon.groups();
    for (const auto& post : posts) {
        add_item(post.id);
        for (const auto& mention : match_sgts(post.text, lexicon, post.id)) add_mention(post.id, mention.group_id);
    }
}

void MentionIndex::add_item(const std::string& item_id) { groups_.try_emplace(item_id); }

void MentionIndex::add_mention(const std::string& item_id, const std::string& group_id) {
    auto& groups = groups_[item_id];
    if (std::find(groups.begin(), groups.end(), group_id) == groups.end()) groups.push_back(group_id);
    if (std::find(group_order_.begin(), group_order_.end(), group_id) == group_order_.end())
        group_order_.push_back(group_id);
}

const std::vector<std::string>& MentionIndex::groups(std::string_view item_id) const {
    const auto it = groups_.find(std::string(item_id));
    if (it == groups_.end()) throw InvalidInput("prediction references unknown item '" + std::string(item_id) + "'");
    return it->second;
}

std::vector<SgtErrorStats> tally_errors(std::span<const PredictionRecord> predictions, const MentionIndex& mentions,
                                        RatioDenominator denominator) {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<SgtErrorStats> stats;
    for (const auto& group : mentions.group_order()) {
        slot.emplace(group, stats.size());
        stats.push_back({group});
    }
    for (const auto& prediction : predictions) {
        if ((prediction.predicted != 0 && prediction.predicted != 1) ||
            (prediction.majority != 0 && prediction.majority != 1))
            throw InvalidInput("predicted and majority labels must be 0 or 1");
        for (const auto& group : mentions.groups(prediction.item_id)) {
            auto& s = stats[slot.at(group)];
            ++s.n_total;
            if (prediction.majority == 0) {
                ++s.n_neg;
                if (prediction.predicted == 1) ++s.n_fp;
            } else {
                ++s.n_pos;
                if (prediction.predicted == 0) ++s.n_fn;
            }
        }
    }
    for (auto& s : stats) {
        const long long fp_den = denominator == RatioDenominator::ClassConditional ? s.n_neg : s.n_total;
        const long long fn_den = denominator == RatioDenominator::ClassConditional ? s.n_pos : s.n_total;
        s.fp_ratio = fp_den > 0 ? static_cast<double>(s.n_fp) / static_cast<double>(fp_den) : 0.0;
        s.fn_ratio = fn_den > 0 ? static_cast<double>(s.n_fn) / static_cast<double>(fn_den) : 0.0;
    }
    return stats;
}

std::string_view to_string(ErrorKind kind) { return kind == ErrorKind::FalsePositive ? "fp" : "fn"; }

std::string_view to_string(StereotypePredictor predictor) {
    return predictor == StereotypePredictor::Warmth ? "warmth" : "competence";
}

GlmFit associate_bias(std::span<const SgtErrorStats> stats, std::span<const StereotypeScore> scores, ErrorKind kind,
                      StereotypePredictor predictor) {
    std::unordered_map<std::string, const StereotypeScore*> by_group;
    for (const auto& score : scores) by_group.emplace(score.group_id, &score);

    std::vector<double> counts;
    std::vector<double> exposure;
    std::vector<double> values;
    for (const auto& s : stats) {
        if (s.n_total <= 0) continue;
        const auto it = by_group.find(s.group_id);
        if (it == by_group.end()) continue;
        counts.push_back(static_cast<double>(kind == ErrorKind::FalsePositive ? s.n_fp : s.n_fn));
        exposure.push_back(std::log(static_cast<double>(s.n_total)));
        values.push_back(predictor == StereotypePredictor::Warmth ? it->second->warmth : it->second->competence);
    }
    if (counts.size() < 3)
        throw InvalidInput("bias association needs at least three groups with predictions and scores, found " +
                           std::to_string(counts.size()));

    const auto n = static_cast<Eigen::Index>(counts.size());
    DesignMatrix design = DesignMatrix::intercept_only(n);
    design.add_column(std::string(to_string(predictor)), Eigen::Map<const Eigen::VectorXd>(values.data(), n));
    design.offset = Eigen::Map<const Eigen::VectorXd>(exposure.data(), n);
    return fit_glm(design, Eigen::Map<const Eigen::VectorXd>(counts.data(), n), Family::Poisson);
}

AuditData audit_items(const PostTable& posts, const AnnotationSet& annotations, bool include_ties) {
    AuditData data;
    std::vector<int> labels;
    for (const auto& item : annotations.items()) {
        if (!posts.contains(item)) continue;
        const auto c = annotations.counts(item);
        const auto vote = majority_vote(c.n1, c.n0, item);
        if (vote.tied && !include_ties) {
            ++data.ties_excluded;
            continue;
        }
        data.item_ids.push_back(item);
        labels.push_back(vote.label);
    }
    data.majority = Eigen::Map<const Eigen::VectorXi>(labels.data(), static_cast<Eigen::Index>(labels.size()));
    return data;
}

AuditRun run_baseline_audit(const PostTable& posts, const AnnotationSet& annotations,
                            const EmbeddingTable& embeddings, const AuditConfig& config) {
    std::vector<int> order(static_cast<std::size_t>(std::max(config.iterations, 0)));
    std::iota(order.begin(), order.end(), 0);
    return run_baseline_audit(posts, annotations, embeddings, config, order);
}

AuditRun run_baseline_audit(const PostTable& posts, const AnnotationSet& annotations,
                            const EmbeddingTable& embeddings, const AuditConfig& config,
                            std::span<const int> execution_order) {
    AuditRun run;
    run.data = audit_items(posts, annotations, config.include_ties);
    const auto n = static_cast<Eigen::Index>(run.data.item_ids.size());
    run.plan = make_splits(n, config.train_fraction, config.iterations, config.seed);

    std::vector<int> check(execution_order.begin(), execution_order.end());
    std::sort(check.begin(), check.end());
    for (std::size_t i = 0; i < check.size(); ++i)
        if (check.size() != static_cast<std::size_t>(config.iterations) || check[i] != static_cast<int>(i))
            throw InvalidInput("execution order must be a permutation of the iterations");

    Eigen::MatrixXd features(n, embeddings.dimension());
    for (Eigen::Index i = 0; i < n; ++i)
        features.row(i) = text_features(posts.find(run.data.item_ids[static_cast<std::size_t>(i)])->text, embeddings)
                              .transpose();

    std::vector<std::vector<PredictionRecord>> per_iteration(static_cast<std::size_t>(config.iterations));
    std::vector<int> converged(static_cast<std::size_t>(config.iterations), 0);

    auto run_iteration = [&](int it) {
        const auto& train = run.plan.train[static_cast<std::size_t>(it)];
        const auto& test = run.plan.test[static_cast<std::size_t>(it)];
        const Eigen::MatrixXd x = features(train, Eigen::all);
        const Eigen::VectorXi y = run.data.majority(train);
        const BaselineModel model = train_baseline(x, y, config.baseline);
        converged[static_cast<std::size_t>(it)] = model.converged ? 1 : 0;
        auto& out = per_iteration[static_cast<std::size_t>(it)];
        out.reserve(test.size());
        for (const auto i : test)
            out.push_back({it, run.data.item_ids[static_cast<std::size_t>(i)],
                           predict_baseline(model, features.row(i).transpose()), run.data.majority(i)});
    };

    const int workers = std::max(1, std::min(config.threads, config.iterations));
    if (workers == 1) {
        for (const int it : execution_order) run_iteration(it);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_lock;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < execution_order.size(); k = next++) {
                    try {
                        run_iteration(execution_order[k]);
                    } catch (...) {
                        const std::lock_guard lock(failure_lock);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (int it = 0; it < config.iterations; ++it) {
        auto& records = per_iteration[static_cast<std::size_t>(it)];
        run.predictions.insert(run.predictions.end(), std::make_move_iterator(records.begin()),
                               std::make_move_iterator(records.end()));
        run.converged_iterations.push_back(converged[static_cast<std::size_t>(it)]);
    }
    return run;
}

}  // namespace stereobias
