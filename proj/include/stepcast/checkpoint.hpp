#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "stepcast/forecasters.hpp"
#include "stepcast/sha256.hpp"

namespace stepcast {

constexpr int kCheckpointSchemaVersion = 1;

namespace detail {

inline nlohmann::json config_to_json(const ModelConfig& c) {
    nlohmann::json j;
    j["architecture"] = to_string(c.architecture);
    j["window"] = c.window;
    j["hidden"] = c.hidden;
    j["late_hidden"] = c.late_hidden;
    j["late_temp"] = c.late_temp;
    j["head"] = to_string(c.head);
    j["goal_threshold"] = c.goal_threshold;
    j["outcome"] = c.outcome;
    j["learning_rate"] = c.learning_rate;
    j["max_epochs"] = c.max_epochs;
    j["batch_size"] = c.batch_size;
    j["patience"] = c.patience;
    j["seed"] = c.seed;
    j["arima_order"] = {c.arima_order.p, c.arima_order.d, c.arima_order.q};
    return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.architecture = architecture_from_string(j.at("architecture").get<std::string>());
    c.window = j.at("window").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.late_hidden = j.at("late_hidden").get<int>();
    c.late_temp = j.at("late_temp").get<int>();
    c.head = head_from_string(j.at("head").get<std::string>());
    c.goal_threshold = j.at("goal_threshold").get<double>();
    c.outcome = j.at("outcome").get<std::string>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.max_epochs = j.at("max_epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.patience = j.at("patience").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    auto order = j.at("arima_order");
    if (!order.is_array() || order.size() != 3) throw SchemaError("checkpoint: arima_order must be [p,d,q]");
    c.arima_order = {order[0].get<int>(), order[1].get<int>(), order[2].get<int>()};
    return c;
}

}  // namespace detail

/// Canonical JSON for a trained model, without the digest field. nlohmann
/// sorts object keys and emits shortest round-trip doubles, so the dump is
/// byte-deterministic and values reload bit-exactly.
inline nlohmann::json checkpoint_to_json(const TrainedForecaster& model) {
    nlohmann::json j;
    j["schema_version"] = kCheckpointSchemaVersion;
    j["config"] = detail::config_to_json(model.config);

    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& [name, tensor] : model.params.values) {
        nlohmann::json t;
        t["shape"] = tensor.shape;
        t["data"] = tensor.data;
        tensors[name] = std::move(t);
    }
    j["tensors"] = std::move(tensors);

    nlohmann::json fits = nlohmann::json::object();
    for (const auto& [user, fit] : model.user_fits) {
        nlohmann::json f;
        f["order"] = {fit.order.p, fit.order.d, fit.order.q};
        f["intercept"] = fit.intercept;
        f["ar"] = fit.ar;
        f["ma"] = fit.ma;
        f["css"] = fit.css;
        f["fell_back"] = fit.fell_back;
        fits[user] = std::move(f);
    }
    j["arima_fits"] = std::move(fits);

    nlohmann::json norm;
    norm["input_mean"] = model.stats.input_mean;
    norm["input_std"] = model.stats.input_std;
    norm["target_mean"] = model.stats.target_mean;
    norm["target_std"] = model.stats.target_std;
    j["normalization"] = std::move(norm);

    nlohmann::json log = nlohmann::json::array();
    for (const auto& e : model.log) {
        nlohmann::json entry;
        entry["epoch"] = e.epoch;
        entry["train_loss"] = e.train_loss;
        entry["val_loss"] = e.val_loss;
        log.push_back(std::move(entry));
    }
    j["training_log"] = std::move(log);
    return j;
}

/// Serialized checkpoint: canonical JSON plus a SHA-256 digest of that JSON.
inline std::string save_checkpoint(const TrainedForecaster& model) {
    nlohmann::json j = checkpoint_to_json(model);
    j["digest"] = sha256_hex(j.dump());
    return j.dump(2) + "\n";
}

inline void save_checkpoint_file(const TrainedForecaster& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << save_checkpoint(model);
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

/// Parses and verifies a checkpoint. Throws ParseError on malformed JSON,
/// SchemaError on missing/invalid fields, StateError on digest mismatch.
inline TrainedForecaster load_checkpoint(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (!j.contains("schema_version") || j.at("schema_version").get<int>() != kCheckpointSchemaVersion)
            throw SchemaError("checkpoint: unsupported or missing schema_version (expected " +
                              std::to_string(kCheckpointSchemaVersion) + ")");
        if (!j.contains("digest") || !j.at("digest").is_string())
            throw SchemaError("checkpoint: missing digest");
        std::string stored = j.at("digest").get<std::string>();
        nlohmann::json body = j;
        body.erase("digest");
        std::string computed = sha256_hex(body.dump());
        if (stored != computed)
            throw StateError("checkpoint digest mismatch: stored " + stored + ", computed " + computed);

        TrainedForecaster model;
        model.config = detail::config_from_json(j.at("config"));

        for (const auto& [name, t] : j.at("tensors").items()) {
            ad::Tensor tensor;
            tensor.shape = t.at("shape").get<std::vector<int>>();
            tensor.data = t.at("data").get<std::vector<double>>();
            std::size_t expect = 1;
            for (int s : tensor.shape) {
                if (s <= 0) throw SchemaError("checkpoint: tensor '" + name + "' has non-positive dimension");
                expect *= static_cast<std::size_t>(s);
            }
            if (tensor.data.size() != expect)
                throw SchemaError("checkpoint: tensor '" + name + "' data length " +
                                  std::to_string(tensor.data.size()) + " does not match shape product " +
                                  std::to_string(expect));
            model.params.add(name, std::move(tensor));
        }

        for (const auto& [user, f] : j.at("arima_fits").items()) {
            arima::ArimaModel fit;
            auto order = f.at("order");
            if (!order.is_array() || order.size() != 3) throw SchemaError("checkpoint: arima fit order must be [p,d,q]");
            fit.order = {order[0].get<int>(), order[1].get<int>(), order[2].get<int>()};
            fit.intercept = f.at("intercept").get<double>();
            fit.ar = f.at("ar").get<std::vector<double>>();
            fit.ma = f.at("ma").get<std::vector<double>>();
            fit.css = f.at("css").get<double>();
            fit.fell_back = f.at("fell_back").get<bool>();
            model.user_fits.emplace(user, std::move(fit));
        }

        const auto& norm = j.at("normalization");
        model.stats.input_mean = norm.at("input_mean").get<std::vector<double>>();
        model.stats.input_std = norm.at("input_std").get<std::vector<double>>();
        model.stats.target_mean = norm.at("target_mean").get<std::map<std::string, double>>();
        model.stats.target_std = norm.at("target_std").get<std::map<std::string, double>>();

        for (const auto& e : j.at("training_log")) {
            EpochLog entry;
            entry.epoch = e.at("epoch").get<int>();
            entry.train_loss = e.at("train_loss").get<double>();
            entry.val_loss = e.at("val_loss").get<double>();
            model.log.push_back(entry);
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("checkpoint: ") + e.what());
    }
}

inline TrainedForecaster load_checkpoint_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_checkpoint(text);
}

}  // namespace stepcast
