#pragma once

// Named parameter store (f32 master weights), Adam, and the "LTEC" checkpoint
// container. Checkpoint layout, little-endian throughout:
//   "LTEC" | u32 version | per parameter:
//     u32 name_len | name bytes | u32 rank | u64 extents[rank] | f32 data
// Parameters repeat until EOF; round-trips are bit-exact.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltm/core.hpp"
#include "ltm/rng.hpp"
#include "ltm/tensor.hpp"

namespace ltm {

struct Param {
    std::string name;
    ad::Shape shape;
    std::vector<float> value;
    std::vector<float> adam_m;
    std::vector<float> adam_v;
};

class ParamStore {
  public:
    int add(const std::string& name, const ad::Shape& shape, std::vector<float> init) {
        if (index_.count(name)) throw std::runtime_error("param exists: " + name);
        if (ad::numel(shape) != static_cast<int64_t>(init.size()))
            throw std::runtime_error("param init size mismatch: " + name);
        Param p;
        p.name = name;
        p.shape = shape;
        p.value = std::move(init);
        p.adam_m.assign(p.value.size(), 0.0f);
        p.adam_v.assign(p.value.size(), 0.0f);
        params_.push_back(std::move(p));
        index_[name] = static_cast<int>(params_.size()) - 1;
        return index_[name];
    }

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    int index(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::runtime_error("unknown param: " + name);
        return it->second;
    }
    Param& at(int i) { return params_[i]; }
    const Param& at(int i) const { return params_[i]; }
    Param& at(const std::string& name) { return params_[index(name)]; }
    size_t count() const { return params_.size(); }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    // FNV over raw value bytes of params whose name starts with prefix.
    uint64_t value_hash(const std::string& prefix = "") const {
        uint64_t h = 0xcbf29ce484222325ull;
        for (const auto& p : params_) {
            if (p.name.rfind(prefix, 0) != 0) continue;
            h = fnv1a(p.name, h);
            h = fnv1a(p.value.data(), p.value.size() * sizeof(float), h);
        }
        return h;
    }

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open for write: " + path);
        f.write("LTEC", 4);
        write_u32(f, 1);
        for (const auto& p : params_) {
            write_u32(f, static_cast<uint32_t>(p.name.size()));
            f.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
            write_u32(f, static_cast<uint32_t>(p.shape.size()));
            for (int64_t e : p.shape) write_u64(f, static_cast<uint64_t>(e));
            f.write(reinterpret_cast<const char*>(p.value.data()),
                    static_cast<std::streamsize>(p.value.size() * sizeof(float)));
        }
        if (!f) throw std::runtime_error("write failed: " + path);
    }

    static ParamStore load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        if (!f) throw std::runtime_error("cannot open: " + path);
        char magic[4];
        f.read(magic, 4);
        if (!f || std::memcmp(magic, "LTEC", 4) != 0)
            throw std::runtime_error("not an LTEC checkpoint: " + path);
        uint32_t version = read_u32(f);
        if (version != 1) throw std::runtime_error("unsupported LTEC version");
        ParamStore ps;
        while (true) {
            uint32_t name_len;
            if (!f.read(reinterpret_cast<char*>(&name_len), 4)) break;  // EOF
            std::string name(name_len, '\0');
            f.read(name.data(), name_len);
            uint32_t rank = read_u32(f);
            ad::Shape shape(rank);
            for (uint32_t i = 0; i < rank; ++i) shape[i] = static_cast<int64_t>(read_u64(f));
            std::vector<float> value(static_cast<size_t>(ad::numel(shape)));
            f.read(reinterpret_cast<char*>(value.data()),
                   static_cast<std::streamsize>(value.size() * sizeof(float)));
            if (!f) throw std::runtime_error("truncated LTEC checkpoint: " + path);
            ps.add(name, shape, std::move(value));
        }
        return ps;
    }

  private:
    static void write_u32(std::ofstream& f, uint32_t v) {
        f.write(reinterpret_cast<const char*>(&v), 4);
    }
    static void write_u64(std::ofstream& f, uint64_t v) {
        f.write(reinterpret_cast<const char*>(&v), 8);
    }
    static uint32_t read_u32(std::ifstream& f) {
        uint32_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 4);
        return v;
    }
    static uint64_t read_u64(std::ifstream& f) {
        uint64_t v = 0;
        f.read(reinterpret_cast<char*>(&v), 8);
        return v;
    }

    std::vector<Param> params_;
    std::unordered_map<std::string, int> index_;
};

// Binds store parameters into a tape on demand. Frozen parameters become
// plain inputs: no gradients are computed and the optimizer skips them.
template <class T>
class ParamBinding {
  public:
    ParamBinding(ad::Tape<T>& tape, ParamStore& store,
                 std::function<bool(const std::string&)> trainable = nullptr)
        : tape_(tape), store_(store), trainable_(std::move(trainable)),
          vars_(store.count()) {}

    ad::Var<T> operator[](const std::string& name) {
        int i = store_.index(name);
        if (!vars_[i].valid()) {
            const Param& p = store_.at(i);
            std::vector<T> buf(p.value.begin(), p.value.end());
            bool train = trainable_ ? trainable_(name) : true;
            vars_[i] = train ? tape_.param(p.shape, buf.data()) : tape_.input(p.shape, buf.data());
        }
        return vars_[i];
    }

    // Accumulates tape gradients (cast to f32) into `grads`, indexed like the
    // store; untouched entries stay empty.
    void collect_grads(std::vector<std::vector<float>>& grads) const {
        grads.resize(store_.count());
        for (size_t i = 0; i < vars_.size(); ++i) {
            if (!vars_[i].valid()) continue;
            const auto& nd = tape_.node(vars_[i].id);
            if (nd.grad == nullptr) continue;
            if (grads[i].empty()) grads[i].assign(nd.n, 0.0f);
            for (int64_t j = 0; j < nd.n; ++j) grads[i][j] += static_cast<float>(nd.grad[j]);
        }
    }

  private:
    ad::Tape<T>& tape_;
    ParamStore& store_;
    std::function<bool(const std::string&)> trainable_;
    std::vector<ad::Var<T>> vars_;
};

// Adam with bias correction; paper names no optimizer, defaults are the
// standard beta=(0.9, 0.999), eps=1e-8.
struct Adam {
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    int64_t t = 0;

    void step(ParamStore& store, const std::vector<std::vector<float>>& grads, float lr) {
        ++t;
        float c1 = 1.0f - std::pow(beta1, static_cast<float>(t));
        float c2 = 1.0f - std::pow(beta2, static_cast<float>(t));
        for (size_t i = 0; i < store.count(); ++i) {
            if (i >= grads.size() || grads[i].empty()) continue;
            Param& p = store.at(static_cast<int>(i));
            const auto& g = grads[i];
            for (size_t j = 0; j < p.value.size(); ++j) {
                p.adam_m[j] = beta1 * p.adam_m[j] + (1.0f - beta1) * g[j];
                p.adam_v[j] = beta2 * p.adam_v[j] + (1.0f - beta2) * g[j] * g[j];
                float mhat = p.adam_m[j] / c1;
                float vhat = p.adam_v[j] / c2;
                p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

// He-normal initialized linear layer appended to the store as name.w / name.b.
inline void add_linear(ParamStore& ps, const std::string& name, int64_t fan_in, int64_t fan_out,
                       CounterRng& rng, float scale = 1.0f) {
    std::vector<float> w(static_cast<size_t>(fan_in * fan_out));
    float std_dev = scale * std::sqrt(2.0f / static_cast<float>(fan_in));
    for (auto& x : w) x = std_dev * rng.next_gaussian();
    ps.add(name + ".w", {fan_in, fan_out}, std::move(w));
    ps.add(name + ".b", {1, fan_out}, std::vector<float>(static_cast<size_t>(fan_out), 0.0f));
}

// y = relu_or_identity(x W + b) convenience for graph builders.
template <class T>
ad::Var<T> linear(ad::Tape<T>& tape, ParamBinding<T>& bind, const std::string& name,
                  ad::Var<T> x, bool with_relu = false) {
    ad::Var<T> w = bind[name + ".w"];
    ad::Var<T> b = bind[name + ".b"];
    ad::Var<T> y = tape.add(tape.matmul(x, w), tape.expand_row(b, x.rows()));
    return with_relu ? tape.relu(y) : y;
}

}  // namespace ltm
