#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "emorec/common.hpp"

namespace emorec {

// Pretrained word vector table, frozen after load.
class EmbeddingTable {
  public:
    EmbeddingTable() = default;
    EmbeddingTable(std::unordered_map<std::string, VectorXd> entries, int dim)
        : entries_(std::move(entries)), dim_(dim) {}

    int dim() const { return dim_; }
    std::size_t size() const { return entries_.size(); }
    bool contains(const std::string& word) const { return entries_.count(word) > 0; }

    const VectorXd& at(const std::string& word) const {
        auto it = entries_.find(word);
        if (it == entries_.end())
            throw DataError("word not in embedding table: " + word);
        return it->second;
    }

  private:
    std::unordered_map<std::string, VectorXd> entries_;
    int dim_ = 0;
};

// The K emotion words; order is the canonical index order for labels,
// scores, and embedding rows.
struct EmotionVocabulary {
    std::vector<std::string> names;

    int size() const { return static_cast<int>(names.size()); }

    int index_of(const std::string& word) const {
        for (int k = 0; k < size(); ++k)
            if (names[k] == word) return k;
        return -1;
    }
};

// Plain-text format: one entry per line, word then dim space-separated floats.
// Duplicate words resolve to the last occurrence (a warning is logged).
EmbeddingTable load_embedding_table(const std::string& path);

// Row k is the table entry for vocabulary.names[k]; K x d_t, frozen.
MatrixXd emotion_embedding_matrix(const EmbeddingTable& table,
                                  const EmotionVocabulary& vocabulary);

}  // namespace emorec
