// Copyright 2026 The hiddenkey Authors
// SPDX-License-Identifier: Apache-2.0

#include "hk/task.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "hk/errors.hpp"
#include "hk/rng.hpp"

namespace hk {
namespace {

struct Sample {
  std::vector<int> ids;
  int label = 0;
  double value = 0.0;
};

double token_value(int id, std::size_t vocab) {
  return 2.0 * static_cast<double>(id - 1) / static_cast<double>(vocab - 2) - 1.0;
}

Sample draw(const TaskConfig& c, Rng& rng) {
  const std::size_t L = c.seq_len;
  Sample s;
  s.ids.assign(L, kClsToken);
  switch (c.kind) {
    case TaskKind::majority_class: {
      const auto classes = c.num_classes;
      const auto fillers = c.vocab_size - 1 - classes;
      while (true) {
        std::vector<std::size_t> counts(classes, 0);
        for (std::size_t i = 1; i < L; ++i) {
          if (rng.bernoulli(0.5)) {
            const auto k = rng.index(classes);
            s.ids[i] = static_cast<int>(1 + k);
            ++counts[k];
          } else {
            s.ids[i] = static_cast<int>(1 + classes + rng.index(fillers));
          }
        }
        const auto top = std::max_element(counts.begin(), counts.end());
        if (std::count(counts.begin(), counts.end(), *top) == 1) {
          s.label = static_cast<int>(top - counts.begin());
          return s;
        }
      }
    }
    case TaskKind::noisy_parity: {
      const std::size_t marked = (c.vocab_size - 1) / 2;
      std::size_t count = 0;
      for (std::size_t i = 1; i < L; ++i) {
        const auto id = 1 + rng.index(c.vocab_size - 1);
        s.ids[i] = static_cast<int>(id);
        count += id <= marked ? 1 : 0;
      }
      s.label = static_cast<int>(count % 2);
      return s;
    }
    case TaskKind::scalar_sum: {
      double total = 0.0;
      for (std::size_t i = 1; i < L; ++i) {
        const int id = static_cast<int>(1 + rng.index(c.vocab_size - 1));
        s.ids[i] = id;
        total += token_value(id, c.vocab_size);
      }
      s.value = total / std::sqrt(static_cast<double>(L - 1));
      return s;
    }
  }
  return s;
}

void append(Dataset& d, const Sample& s) {
  d.ids.insert(d.ids.end(), s.ids.begin(), s.ids.end());
  d.classes.push_back(s.label);
  d.values.push_back(s.value);
}

}  // namespace

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::majority_class:
      return "majority_class";
    case TaskKind::noisy_parity:
      return "noisy_parity";
    case TaskKind::scalar_sum:
      return "scalar_sum";
  }
  return "majority_class";
}

TaskKind parse_task_kind(std::string_view text) {
  for (auto k : {TaskKind::majority_class, TaskKind::noisy_parity, TaskKind::scalar_sum}) {
    if (to_string(k) == text) {
      return k;
    }
  }
  throw ContractError("unknown task kind '" + std::string(text) + "'");
}

void TaskConfig::validate() const {
  if (seq_len < 2) {
    throw ContractError("task: seq_len must be at least 2");
  }
  if (n_train == 0 || n_eval == 0) {
    throw ContractError("task: n_train and n_eval must be positive");
  }
  if (!(label_noise >= 0.0 && label_noise < 0.5)) {
    throw ContractError("task: label_noise must lie in [0, 0.5), got " +
                        std::to_string(label_noise));
  }
  if (kind == TaskKind::majority_class && (num_classes < 2 || vocab_size < num_classes + 2)) {
    throw ContractError("task: majority_class needs num_classes >= 2 and a filler token");
  }
  if (kind != TaskKind::majority_class && vocab_size < 3) {
    throw ContractError("task: vocab_size must be at least 3");
  }
}

HeadKind TaskConfig::head() const {
  return kind == TaskKind::scalar_sum ? HeadKind::regressor : HeadKind::classifier;
}

std::size_t TaskConfig::outputs() const {
  switch (kind) {
    case TaskKind::majority_class:
      return num_classes;
    case TaskKind::noisy_parity:
      return 2;
    case TaskKind::scalar_sum:
      return 1;
  }
  return 1;
}

TokenBatch Dataset::batch(std::span<const std::size_t> rows) const {
  TokenBatch b;
  b.batch = rows.size();
  b.len = seq_len;
  b.ids.reserve(rows.size() * seq_len);
  for (auto r : rows) {
    const auto first = ids.begin() + static_cast<std::ptrdiff_t>(r * seq_len);
    b.ids.insert(b.ids.end(), first, first + static_cast<std::ptrdiff_t>(seq_len));
  }
  return b;
}

Targets Dataset::targets(std::span<const std::size_t> rows) const {
  Targets t;
  t.classes.reserve(rows.size());
  t.values.reserve(rows.size());
  for (auto r : rows) {
    t.classes.push_back(classes[r]);
    t.values.push_back(values[r]);
  }
  return t;
}

SyntheticTask make_task(const TaskConfig& config) {
  config.validate();
  SyntheticTask task;
  task.config = config;
  task.train.seq_len = task.eval.seq_len = config.seq_len;

  Rng rng(derive_seed({config.data_seed, 0xda7a}));
  std::set<std::vector<int>> seen;
  const std::size_t total = config.n_train + config.n_eval;
  std::size_t attempts = 0;
  while (seen.size() < total) {
    if (++attempts > 100 * total) {
      throw ContractError("task: sequence space too small for " + std::to_string(total) +
                          " distinct examples");
    }
    Sample s = draw(config, rng);
    if (!seen.insert(s.ids).second) {
      continue;
    }
    append(seen.size() <= config.n_train ? task.train : task.eval, s);
  }

  task.clean_train_classes = task.train.classes;
  Rng noise(derive_seed({config.data_seed, 0x9015e}));
  const auto clean_values = task.train.values;
  for (std::size_t i = 0; i < config.n_train; ++i) {
    if (!noise.bernoulli(config.label_noise)) {
      continue;
    }
    ++task.noisy_labels;
    if (config.head() == HeadKind::classifier) {
      const auto C = config.outputs();
      const auto shift = 1 + noise.index(C - 1);
      task.train.classes[i] = static_cast<int>((task.train.classes[i] + shift) % C);
    } else {
      task.train.values[i] = clean_values[noise.index(config.n_train)];
    }
  }
  return task;
}

}  // namespace hk
