#include "emorec/embedding.hpp"

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

namespace emorec {

EmbeddingTable load_embedding_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open embedding file: " + path);

    std::unordered_map<std::string, VectorXd> entries;
    int dim = -1;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string word;
        ls >> word;
        std::vector<double> vals;
        std::string tok;
        while (ls >> tok) {
            double v;
            auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
            if (ec != std::errc{} || p != tok.data() + tok.size())
                throw DataError("non-numeric embedding component '" + tok + "' at line " +
                                std::to_string(line_no) + " of " + path);
            vals.push_back(v);
        }
        if (vals.empty())
            throw DataError("embedding line " + std::to_string(line_no) +
                            " has no vector components in " + path);
        if (dim < 0) {
            dim = static_cast<int>(vals.size());
        } else if (static_cast<int>(vals.size()) != dim) {
            throw DataError("inconsistent embedding dimension at line " +
                            std::to_string(line_no) + " of " + path + ": expected " +
                            std::to_string(dim) + ", got " + std::to_string(vals.size()));
        }
        if (entries.count(word))
            std::cerr << "warning: duplicate word '" << word << "' at line " << line_no
                      << " of " << path << ", keeping last occurrence\n";
        entries[word] = Eigen::Map<const VectorXd>(vals.data(), dim);
    }
    if (entries.empty()) throw DataError("empty embedding file: " + path);
    return EmbeddingTable(std::move(entries), dim);
}

MatrixXd emotion_embedding_matrix(const EmbeddingTable& table,
                                  const EmotionVocabulary& vocabulary) {
    const int k_count = vocabulary.size();
    MatrixXd e_t(k_count, table.dim());
    for (int k = 0; k < k_count; ++k) {
        const std::string& word = vocabulary.names[k];
        if (!table.contains(word))
            throw DataError("emotion word not in embedding table: " + word);
        e_t.row(k) = table.at(word).transpose();
    }
    return e_t;
}

}  // namespace emorec
