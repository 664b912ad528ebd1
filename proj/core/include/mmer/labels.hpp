#pragma once

#include <array>
#include <stdexcept>
#include <string>

namespace mmer::corpus {

// Fixed 8-way emotion inventory; index order follows the RAVDESS numeric
// coding so checkpoints stay stable.
enum class EmotionLabel : int {
  neutral = 0,
  calm = 1,
  happy = 2,
  sad = 3,
  angry = 4,
  fearful = 5,
  disgust = 6,
  surprised = 7,
};

constexpr int kEmotionCount = 8;

inline const std::array<const char*, kEmotionCount>& emotion_names() {
  static const std::array<const char*, kEmotionCount> names = {
      "neutral", "calm", "happy", "sad", "angry", "fearful", "disgust", "surprised"};
  return names;
}

inline const char* emotion_name(EmotionLabel label) {
  const int i = static_cast<int>(label);
  if (i < 0 || i >= kEmotionCount)
    throw std::invalid_argument("emotion_name: index out of range: " + std::to_string(i));
  return emotion_names()[i];
}

inline EmotionLabel emotion_from_index(int i) {
  if (i < 0 || i >= kEmotionCount)
    throw std::invalid_argument("emotion_from_index: out of range: " + std::to_string(i));
  return static_cast<EmotionLabel>(i);
}

inline EmotionLabel emotion_from_name(const std::string& name) {
  for (int i = 0; i < kEmotionCount; ++i)
    if (name == emotion_names()[i]) return static_cast<EmotionLabel>(i);
  throw std::invalid_argument("emotion_from_name: unknown label '" + name + "'");
}

}  // namespace mmer::corpus
